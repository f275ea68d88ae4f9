"""Lexical fallback scorers.

These serve whenever a transformer checkpoint is not configured or fails to
load.  They are graded word-overlap measures, not the binary rules the
engine's in-process mocks use, but they respect the same output ranges:
probabilities in [0, 1] for entailment/similarity/ordering, log-probabilities
(<= 0) for relevance/coherence/discriminator.
"""

from __future__ import annotations

import math
import re

WORD_RE = re.compile(r"[a-z0-9']+")
LOG_FLOOR = 1e-6


def word_set(text: str) -> frozenset[str]:
    return frozenset(WORD_RE.findall(text.lower()))


def jaccard(a: str, b: str) -> float:
    wa, wb = word_set(a), word_set(b)
    if not wa and not wb:
        return 1.0
    union = wa | wb
    return len(wa & wb) / len(union) if union else 0.0


def entailment_probability(premise: str, hypothesis: str) -> float:
    """Fraction of hypothesis words covered by the premise.

    An empty hypothesis is vacuously entailed.  Identity pairs score 1.0,
    which keeps the deployment sanity check (> 0.9 on identity) honest.
    """
    hyp = word_set(hypothesis)
    if not hyp:
        return 1.0
    prem = word_set(premise)
    return len(hyp & prem) / len(hyp)


def similarity(a: str, b: str) -> float:
    return jaccard(a, b)


_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[str]:
    # terminator followed by whitespace ends a sentence; keep the terminator
    return [part for part in _SENTENCE_RE.split(text.strip()) if part]


def ordering_probability(context: str, sentence: str) -> float:
    """Heuristic in-order probability from neighbor overlap.

    A sentence sitting where it belongs tends to share more words with its
    immediate neighbors than with the rest of the story.  Squashed through a
    logistic so the output is a probability; 0.5 when the sentence is not
    found or has no basis for comparison.
    """
    sentences = split_sentences(context)
    if sentence not in sentences or len(sentences) < 3:
        return 0.5
    index = sentences.index(sentence)
    neighbors = [sentences[i] for i in (index - 1, index + 1)
                 if 0 <= i < len(sentences)]
    others = [s for i, s in enumerate(sentences)
              if s is not sentences[index] and sentences[i] not in neighbors]
    if not neighbors:
        return 0.5
    near = sum(jaccard(sentence, n) for n in neighbors) / len(neighbors)
    far = sum(jaccard(sentence, o) for o in others) / len(others) if others else 0.0
    return 1.0 / (1.0 + math.exp(-6.0 * (near - far)))


def relevance_logprob(event: str, passage: str) -> float:
    return math.log(max(jaccard(event, passage), LOG_FLOOR))


def coherence_logprob(context: str, passage: str) -> float:
    """Log of how much of the passage's vocabulary the context supports."""
    passage_words = word_set(passage)
    if not passage_words:
        return math.log(LOG_FLOOR)
    covered = len(passage_words & word_set(context)) / len(passage_words)
    return math.log(max(covered, LOG_FLOOR))


def discriminator_logprob(summary: str, prefix: str) -> float:
    return math.log(max(jaccard(summary, prefix), LOG_FLOOR))
