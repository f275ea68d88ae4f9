"""Scorer interfaces, deterministic mocks, and the remote wire client."""

from __future__ import annotations

from .base import ScorerKind, ScorerSuite
from .mock import MockScorerSuite
from .ordering_data import (
    OrderingExample,
    OrderingLabel,
    build_ordering_dataset,
    read_ordering_dataset,
    write_ordering_dataset,
)
from .remote import RemoteScorerSuite

__all__ = [
    "ScorerKind",
    "ScorerSuite",
    "MockScorerSuite",
    "RemoteScorerSuite",
    "OrderingExample",
    "OrderingLabel",
    "build_ordering_dataset",
    "read_ordering_dataset",
    "write_ordering_dataset",
]
