"""Scorer service speaking the doc-engine wire protocol."""

__version__ = "0.1.0"
