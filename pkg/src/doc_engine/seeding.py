"""Deterministic seed derivation.

All stochastic choices in the engine are keyed off content rather than call
order: a run seeded identically replays bit-for-bit even when resumed from a
checkpoint, because no global RNG state survives between decisions.  Python's
builtin ``hash`` is salted per process, so everything here goes through
SHA-256.
"""

from __future__ import annotations

import hashlib
import random

_SEP = b"\x1f"


def stable_digest(*parts: object) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(_SEP)
    return h.digest()


def stable_hash(*parts: object) -> int:
    """A 64-bit integer derived only from the textual content of *parts*."""
    return int.from_bytes(stable_digest(*parts)[:8], "big")


def stable_float(*parts: object) -> float:
    """Uniform float in [0, 1) derived from *parts*."""
    return stable_hash(*parts) / 2**64


def stable_rng(*parts: object) -> random.Random:
    """A fresh RNG whose stream depends only on *parts*."""
    return random.Random(stable_hash(*parts))


def stable_choice(seq, *parts: object):
    """Pick one element of *seq* deterministically from *parts*."""
    if not seq:
        raise ValueError("cannot choose from an empty sequence")
    return seq[stable_hash(*parts) % len(seq)]
