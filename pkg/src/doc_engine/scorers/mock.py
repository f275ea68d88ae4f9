"""Deterministic lexical stand-ins for the learned scorers.

The rules are intentionally simple enough to recompute by hand in tests:

- entailment: 1.0 iff the hypothesis' content words are a subset of the
  premise's content words, else 0.0
- similarity: Jaccard overlap of word sets
- ordering: constant 0.5 unless scripted
- relevance: log(Jaccard(event words, passage words) + 1e-6)
- coherence: scriptable constant, default log 0.9
- discriminator: log(Jaccard(summary words, prefix words) + 1e-6)

Every scorer accepts a scripted response queue so tests can drive reranking
and early-stopping scenarios; queue access is serialized for concurrent
drafting candidates.
"""

from __future__ import annotations

import math
import re
import threading
from collections import deque
from functools import lru_cache
from typing import Iterable

from ..textops import jaccard, word_set
from .base import ScorerKind, ScorerSuite

LOG_EPSILON = 1e-6

# Function words ignored by the mock entailment rule.  Deliberately small so
# hand-derived oracles stay easy to recompute.
STOPWORDS = frozenset(
    """
    a an the and or but if then than so because as at by for from in into of
    off on onto out over to under up with is are was were be been being am
    do does did done has have had having will would shall should can could
    may might must it its this that these those there here he she they him
    her them his their not no nor very too also just
    """.split()
)

_TRAILING_WORD_RE = re.compile(r"[A-Za-z0-9']*\Z")


@lru_cache(maxsize=8192)
def content_words(text: str) -> frozenset[str]:
    return word_set(text) - STOPWORDS


class MockScorerSuite(ScorerSuite):
    def __init__(self, coherence_logprob: float = math.log(0.9)) -> None:
        self._coherence_logprob = coherence_logprob
        self._scripts: dict[ScorerKind, deque[float]] = {k: deque() for k in ScorerKind}
        self._lock = threading.Lock()
        self._any_scripts = False

    # -- scripting ---------------------------------------------------------

    def script(self, kind: ScorerKind, values: Iterable[float]) -> None:
        """Queue responses returned (FIFO) by upcoming calls of this kind."""
        with self._lock:
            self._scripts[kind].extend(float(v) for v in values)
            self._any_scripts = True

    def clear_scripts(self) -> None:
        with self._lock:
            for queue in self._scripts.values():
                queue.clear()
            self._any_scripts = False

    def pending_scripts(self, kind: ScorerKind) -> int:
        with self._lock:
            return len(self._scripts[kind])

    def _pop_script(self, kind: ScorerKind) -> float | None:
        # unscripted suites stay lock-free on the scoring hot path
        if not self._any_scripts:
            return None
        with self._lock:
            queue = self._scripts[kind]
            if queue:
                value = queue.popleft()
                if not any(self._scripts.values()):
                    self._any_scripts = False
                return value
            return None

    # -- rules -------------------------------------------------------------

    def _score_pair(self, kind: ScorerKind, first: str, second: str) -> float:
        scripted = self._pop_script(kind)
        if scripted is not None:
            return scripted
        if kind is ScorerKind.ENTAILMENT:
            return 1.0 if content_words(second) <= content_words(first) else 0.0
        if kind is ScorerKind.SIMILARITY:
            return jaccard(word_set(first), word_set(second))
        if kind is ScorerKind.ORDERING:
            return 0.5
        if kind is ScorerKind.RELEVANCE:
            return math.log(jaccard(word_set(first), word_set(second)) + LOG_EPSILON)
        if kind is ScorerKind.COHERENCE:
            return self._coherence_logprob
        if kind is ScorerKind.CONTROLLER_DISCRIMINATOR:
            return math.log(jaccard(word_set(first), word_set(second)) + LOG_EPSILON)
        raise TypeError(f"unknown scorer kind: {kind!r}")

    # -- vectorized prefix scoring ------------------------------------------

    def discriminator_extensions(
        self, summary: str, prefix: str, extensions: list[str]
    ) -> list[float]:
        """Batched prefix scoring with incremental word-set updates.

        Equivalent to calling :meth:`discriminator` per extension (property
        tested), but avoids re-tokenizing the shared prefix for each of the
        ~top-k candidate tokens at every decoded position.
        """
        if self._any_scripts:
            with self._lock:
                queue = self._scripts[ScorerKind.CONTROLLER_DISCRIMINATOR]
                if queue:
                    out = []
                    for ext in extensions:
                        if queue:
                            out.append(queue.popleft())
                        else:
                            out.append(self._discriminator_rule(summary, prefix + ext))
                    if not any(self._scripts.values()):
                        self._any_scripts = False
                    return out
        # a trailing partial word can be completed by an extension, so words
        # are recounted across the boundary
        tail = _TRAILING_WORD_RE.search(prefix).group(0)
        head = prefix[: len(prefix) - len(tail)]
        base = word_set(head)
        summary_words = word_set(summary)
        inter0 = len(summary_words & base)
        union0 = len(summary_words | base)
        scores = []
        for ext in extensions:
            inter = inter0
            union = union0
            for w in word_set(tail + ext) - base:
                if w in summary_words:
                    inter += 1
                else:
                    union += 1
            overlap = inter / union if union else 0.0
            scores.append(math.log(overlap + LOG_EPSILON))
        return scores

    def _discriminator_rule(self, summary: str, prefix: str) -> float:
        return math.log(jaccard(word_set(summary), word_set(prefix)) + LOG_EPSILON)
