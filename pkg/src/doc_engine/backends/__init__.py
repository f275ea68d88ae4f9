"""Language-model backends: shared types, deterministic mock, HTTP client."""

from .base import (
    CompletionRequest,
    DecodingSession,
    InsertionResult,
    LMBackend,
    TokenDistribution,
    WordTokenizer,
    apply_frequency_penalty,
    log_normalize,
)
from .http import HttpBackend
from .mock import MockBackend

__all__ = [
    "CompletionRequest",
    "DecodingSession",
    "InsertionResult",
    "LMBackend",
    "TokenDistribution",
    "WordTokenizer",
    "apply_frequency_penalty",
    "log_normalize",
    "HttpBackend",
    "MockBackend",
]
