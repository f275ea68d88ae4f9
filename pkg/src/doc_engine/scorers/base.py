"""Common interface for the six scoring models used across the pipeline.

Each scorer takes a pair of texts and returns a single number.  Probability
scorers (entailment, similarity, ordering) return values in [0, 1]; the
rerankers and the prefix discriminator return log-probabilities.  Callers may
go through :meth:`ScorerSuite.score` with an explicit kind, or use the typed
convenience methods.
"""

from __future__ import annotations

import abc
from enum import Enum


class ScorerKind(str, Enum):
    ENTAILMENT = "entailment"
    SIMILARITY = "similarity"
    ORDERING = "ordering"
    RELEVANCE = "relevance"
    COHERENCE = "coherence"
    CONTROLLER_DISCRIMINATOR = "controller_discriminator"


# Wire-protocol field names for each kind's (first, second) input.
INPUT_FIELDS: dict[ScorerKind, tuple[str, str]] = {
    ScorerKind.ENTAILMENT: ("premise", "hypothesis"),
    ScorerKind.SIMILARITY: ("a", "b"),
    ScorerKind.ORDERING: ("context", "sentence"),
    ScorerKind.RELEVANCE: ("event", "passage"),
    ScorerKind.COHERENCE: ("context", "passage"),
    ScorerKind.CONTROLLER_DISCRIMINATOR: ("summary", "prefix"),
}


def _check_pair(kind: ScorerKind, first: str, second: str) -> None:
    if not isinstance(kind, ScorerKind):
        raise TypeError(f"expected ScorerKind, got {type(kind).__name__}")
    if not isinstance(first, str) or not isinstance(second, str):
        names = INPUT_FIELDS[kind]
        raise TypeError(
            f"{kind.value} inputs ({names[0]}, {names[1]}) must be strings"
        )


class ScorerSuite(abc.ABC):
    """Abstract pair-scoring suite.

    Subclasses implement :meth:`_score_pair`; the public methods validate
    inputs and dispatch.
    """

    @abc.abstractmethod
    def _score_pair(self, kind: ScorerKind, first: str, second: str) -> float:
        raise NotImplementedError

    def score(self, kind: ScorerKind, first: str, second: str) -> float:
        _check_pair(kind, first, second)
        return self._score_pair(kind, first, second)

    def entailment(self, premise: str, hypothesis: str) -> float:
        """Probability that ``premise`` entails ``hypothesis``."""
        return self.score(ScorerKind.ENTAILMENT, premise, hypothesis)

    def similarity(self, a: str, b: str) -> float:
        """Sentence similarity in [0, 1]."""
        return self.score(ScorerKind.SIMILARITY, a, b)

    def ordering(self, context: str, sentence: str) -> float:
        """Probability that ``sentence`` sits in the right place in ``context``."""
        return self.score(ScorerKind.ORDERING, context, sentence)

    def relevance(self, event: str, passage: str) -> float:
        """Log-probability that ``passage`` is relevant to the outline event."""
        return self.score(ScorerKind.RELEVANCE, event, passage)

    def coherence(self, context: str, passage: str) -> float:
        """Log-probability that ``passage`` coheres with the preceding context."""
        return self.score(ScorerKind.COHERENCE, context, passage)

    def discriminator(self, summary: str, prefix: str) -> float:
        """Log-probability that a passage prefix matches a constraint summary."""
        return self.score(ScorerKind.CONTROLLER_DISCRIMINATOR, summary, prefix)

    def discriminator_extensions(
        self, summary: str, prefix: str, extensions: list[str]
    ) -> list[float]:
        """Score ``prefix + ext`` against ``summary`` for every extension.

        This is the per-token hot path during guided decoding; implementations
        may batch or vectorize it.  The default delegates to
        :meth:`discriminator` one call at a time.
        """
        return [self.discriminator(summary, prefix + ext) for ext in extensions]
