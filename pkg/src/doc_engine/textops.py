"""Small text utilities shared across modules.

The sentence splitter here is the single definition used everywhere a
sentence boundary matters (contrastive splices, ordering-data construction,
summaries): a sentence ends at '.', '!' or '?' followed by whitespace or end
of text, and the terminator stays with the sentence.
"""

from __future__ import annotations

import math
import re
from functools import lru_cache
from typing import Sequence

_TERMINATORS = ".!?"
_WORD_RE = re.compile(r"[A-Za-z0-9']+")
_CAP_WORD_RE = re.compile(r"\b[A-Z][A-Za-z']*\b")


def sentence_end_offsets(text: str) -> list[int]:
    """Character offsets just past each sentence terminator."""
    ends = []
    n = len(text)
    for i, ch in enumerate(text):
        if ch in _TERMINATORS and (i + 1 == n or text[i + 1].isspace()):
            ends.append(i + 1)
    return ends


def split_sentences(text: str) -> list[str]:
    """Split into sentences, each stripped, terminator kept.

    A trailing fragment without a terminator is returned as a final sentence.
    """
    out = []
    start = 0
    for end in sentence_end_offsets(text):
        seg = text[start:end].strip()
        if seg:
            out.append(seg)
        start = end
    tail = text[start:].strip()
    if tail:
        out.append(tail)
    return out


def first_sentence(text: str) -> str:
    sentences = split_sentences(text)
    return sentences[0] if sentences else ""


def words(text: str) -> list[str]:
    return _WORD_RE.findall(text)


@lru_cache(maxsize=8192)
def word_set(text: str) -> frozenset[str]:
    return frozenset(w.lower() for w in _WORD_RE.findall(text))


def capitalized_words(text: str) -> list[str]:
    return _CAP_WORD_RE.findall(text)


def word_count(text: str) -> int:
    return len(text.split())


def jaccard(a: frozenset[str] | set[str], b: frozenset[str] | set[str]) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def ngram_repetition_ratio(tokens: Sequence[object], n: int = 4) -> float:
    """Fraction of n-grams that duplicate an earlier n-gram (0.0 if too short)."""
    total = len(tokens) - n + 1
    if total <= 0:
        return 0.0
    grams = {tuple(tokens[i : i + n]) for i in range(total)}
    return 1.0 - len(grams) / total


@lru_cache(maxsize=8192)
def _char_counts(text: str) -> dict[str, int]:
    counts: dict[str, int] = {}
    for ch in text:
        counts[ch] = counts.get(ch, 0) + 1
    return counts


def _char_frequency_lower_bound(a: str, b: str) -> int:
    # each substitution fixes one surplus char on each side; each insert or
    # delete fixes one, so edit distance >= max surplus
    ca, cb = _char_counts(a), _char_counts(b)
    extra_a = extra_b = 0
    for ch, va in ca.items():
        diff = va - cb.get(ch, 0)
        if diff > 0:
            extra_a += diff
    for ch, vb in cb.items():
        diff = vb - ca.get(ch, 0)
        if diff > 0:
            extra_b += diff
    return max(extra_a, extra_b)


def levenshtein(a: str, b: str, bound: int | None = None) -> int:
    """Edit distance; with *bound*, any distance > bound is reported as bound+1."""
    if a == b:
        return 0
    la, lb = len(a), len(b)
    if la == 0 or lb == 0:
        d = la or lb
        return d if bound is None or d <= bound else bound + 1
    if bound is not None and (abs(la - lb) > bound or _char_frequency_lower_bound(a, b) > bound):
        return bound + 1
    band = bound if bound is not None else la + lb
    big = la + lb + 1
    prev = [j if j <= band else big for j in range(lb + 1)]
    for i in range(1, la + 1):
        lo = max(1, i - band)
        hi = min(lb, i + band)
        cur = [big] * (lb + 1)
        if lo == 1:
            cur[0] = i if i <= band else big
        ca = a[i - 1]
        best = cur[0] if lo == 1 else big
        for j in range(lo, hi + 1):
            cost = 0 if ca == b[j - 1] else 1
            v = prev[j - 1] + cost
            up = prev[j] + 1
            if up < v:
                v = up
            left = cur[j - 1] + 1
            if left < v:
                v = left
            cur[j] = v
            if v < best:
                best = v
        if bound is not None and best > bound:
            return bound + 1
        prev = cur
    d = prev[lb]
    return d if bound is None or d <= bound else bound + 1


def edit_similarity(a: str, b: str) -> float:
    """Normalized edit similarity, 1 - distance/max(len), case-insensitive."""
    a, b = a.lower(), b.lower()
    m = max(len(a), len(b))
    if m == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / m


def edit_similarity_at_least(a: str, b: str, threshold: float) -> bool:
    """Banded early-exit check for edit_similarity(a, b) >= threshold."""
    a, b = a.lower(), b.lower()
    m = max(len(a), len(b))
    if m == 0:
        return True
    bound = int(math.floor((1.0 - threshold) * m + 1e-12))
    return levenshtein(a, b, bound=bound) <= bound
