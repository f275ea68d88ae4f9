"""Exception hierarchy shared across the engine.

Every error raised by this package derives from :class:`DocEngineError` so
callers can catch one base type.  The CLI maps the leaf classes onto process
exit codes (see ``doc_engine.cli``).
"""

from __future__ import annotations


class DocEngineError(Exception):
    """Base class for all engine errors."""


class ConfigError(DocEngineError):
    """Invalid or missing configuration (CLI exit code 2)."""


class TransportError(DocEngineError):
    """A remote backend or scorer failed after retries (CLI exit code 3)."""

    def __init__(self, message: str, *, attempts: int = 1, cause: Exception | None = None):
        super().__init__(message)
        self.attempts = attempts
        self.cause = cause


class BudgetError(DocEngineError):
    """A token budget could not be satisfied (CLI exit code 4)."""


class StageError(DocEngineError):
    """A pipeline stage failed; carries the stage name (CLI exit code 5)."""

    def __init__(self, stage: str, message: str, *, cause: Exception | None = None):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage
        self.cause = cause


class CapabilityError(DocEngineError):
    """The backend does not support the requested operation natively."""


class ProtocolError(DocEngineError):
    """A remote peer answered outside the wire contract."""


class ValidationError(DocEngineError):
    """A domain object violates a structural invariant."""
