"""Backend-agnostic types for completion, insertion, and token-level decoding.

A token everywhere in this package means one of the active backend's tokens.
The bundled :class:`WordTokenizer` splits on whitespace and punctuation and
interns unseen words on the fly, so any backend can report token counts and
render token ids back to text.

The decaying frequency penalty is defined here because it is pure math over a
distribution and a session's token history:

    new_logprob(t) = logprob(t) - strength * sum(decay ** d_i for i)

where ``d_i`` counts positions between occurrence ``i`` of ``t`` and the slot
being generated, and the history includes the prompt.  The result is
renormalized over the same top-k support.
"""

from __future__ import annotations

import math
import re
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

from ..errors import BudgetError, CapabilityError, ValidationError

DEFAULT_CONTEXT_WINDOW = 1024

_TOKEN_RE = re.compile(r"\n|[A-Za-z0-9']+|[^\sA-Za-z0-9']")
_PUNCT_RE = re.compile(r"[^\sA-Za-z0-9']")


class WordTokenizer:
    """Whitespace-and-punctuation tokenizer with a fixed base vocabulary.

    Words beyond the base vocabulary are interned on demand; ids are stable
    for the lifetime of the tokenizer (and reproducible because interning
    order follows the texts fed in, which are themselves deterministic).
    """

    def __init__(self, vocabulary: list[str] | None = None):
        self._pieces: list[str] = []
        self._ids: dict[str, int] = {}
        self._lock = threading.Lock()
        self.base_vocab_size = 0
        for piece in vocabulary or []:
            self._intern(piece)
        self.base_vocab_size = len(self._pieces)

    def _intern(self, piece: str) -> int:
        with self._lock:
            tid = self._ids.get(piece)
            if tid is None:
                tid = len(self._pieces)
                self._pieces.append(piece)
                self._ids[piece] = tid
            return tid

    def encode(self, text: str) -> list[int]:
        return [self._intern(piece) for piece in _TOKEN_RE.findall(text)]

    def count(self, text: str) -> int:
        return len(_TOKEN_RE.findall(text))

    def piece(self, token_id: int) -> str:
        try:
            return self._pieces[token_id]
        except IndexError:
            raise ValidationError(f"unknown token id {token_id}") from None

    def token_text(self, token_id: int) -> str:
        """Rendering of the token when appended to existing text."""
        piece = self.piece(token_id)
        if piece == "\n" or _PUNCT_RE.fullmatch(piece):
            return piece
        return " " + piece

    def decode(self, token_ids: list[int]) -> str:
        parts: list[str] = []
        prev: str | None = None
        for tid in token_ids:
            piece = self.piece(tid)
            if piece == "\n" or _PUNCT_RE.fullmatch(piece):
                parts.append(piece)
            elif prev is None or prev == "\n":
                parts.append(piece)
            else:
                parts.append(" " + piece)
            prev = piece
        return "".join(parts)

    def base_ids(self) -> range:
        return range(self.base_vocab_size)


@dataclass
class CompletionRequest:
    prompt: str
    suffix: str | None = None
    max_tokens: int = 64
    temperature: float = 1.0
    num_candidates: int = 1
    stop_sequences: list[str] = field(default_factory=list)

    def violations(self) -> list[str]:
        out = []
        if self.max_tokens < 1:
            out.append("max_tokens must be >= 1")
        if self.temperature < 0:
            out.append("temperature must be >= 0")
        if self.num_candidates < 1:
            out.append("num_candidates must be >= 1")
        return out


@dataclass
class InsertionResult:
    texts: list[str]
    via_fallback: bool = False


@dataclass
class TokenDistribution:
    entries: dict[int, float]
    k: int

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValidationError("distribution has no entries")
        if len(self.entries) > self.k:
            raise ValidationError("distribution exceeds its top-k bound")
        for tid, lp in self.entries.items():
            if not math.isfinite(lp):
                raise ValidationError(f"non-finite log-probability for token {tid}")


def log_normalize(entries: dict[int, float]) -> dict[int, float]:
    """Renormalize log-weights so the exponentials sum to one."""
    m = max(entries.values())
    lse = m + math.log(math.fsum(math.exp(v - m) for v in entries.values()))
    return {t: v - lse for t, v in entries.items()}


class DecodingSession:
    """Single-owner token history for one decoding stream.

    The history includes the prompt; penalty parameters are fixed for the
    session's lifetime.  ``fork`` gives candidate streams an independent copy.
    """

    def __init__(self, tokenizer: WordTokenizer, token_ids: list[int], *,
                 temperature: float = 0.8, penalty_strength: float = 1.0,
                 penalty_decay: float = 0.98,
                 context_window: int = DEFAULT_CONTEXT_WINDOW):
        if not 0 < penalty_decay <= 1:
            raise ValidationError("penalty_decay must lie in (0, 1]")
        if len(token_ids) > context_window:
            raise BudgetError(
                f"session history ({len(token_ids)} tokens) exceeds the "
                f"context window ({context_window})")
        self.tokenizer = tokenizer
        self.token_ids = list(token_ids)
        self.temperature = temperature
        self.penalty_strength = penalty_strength
        self.penalty_decay = penalty_decay
        self.context_window = context_window
        self.cache_key: str | None = None
        self._occurrences: dict[int, list[int]] = {}
        for pos, tid in enumerate(self.token_ids):
            self._occurrences.setdefault(tid, []).append(pos)

    @classmethod
    def from_prompt(cls, tokenizer: WordTokenizer, prompt: str, **kwargs) -> "DecodingSession":
        return cls(tokenizer, tokenizer.encode(prompt), **kwargs)

    def __len__(self) -> int:
        return len(self.token_ids)

    @property
    def remaining(self) -> int:
        return self.context_window - len(self.token_ids)

    def append(self, token_id: int) -> None:
        if self.remaining <= 0:
            raise BudgetError("session is at its context window")
        self._occurrences.setdefault(token_id, []).append(len(self.token_ids))
        self.token_ids.append(token_id)
        self.cache_key = None

    def occurrences(self, token_id: int) -> list[int]:
        return self._occurrences.get(token_id, [])

    def text(self) -> str:
        return self.tokenizer.decode(self.token_ids)

    def tail_texts(self, n: int) -> list[str]:
        return [self.tokenizer.piece(t) for t in self.token_ids[-n:]]

    def fork(self) -> "DecodingSession":
        clone = DecodingSession(
            self.tokenizer, self.token_ids,
            temperature=self.temperature,
            penalty_strength=self.penalty_strength,
            penalty_decay=self.penalty_decay,
            context_window=self.context_window,
        )
        clone.cache_key = self.cache_key
        return clone


def apply_frequency_penalty(dist: TokenDistribution, session: DecodingSession) -> TokenDistribution:
    """Subtract the decaying repetition penalty and renormalize over the support."""
    strength = session.penalty_strength
    decay = session.penalty_decay
    position = len(session.token_ids)
    penalized: dict[int, float] = {}
    for tid, lp in dist.entries.items():
        occ = session.occurrences(tid)
        if occ and strength:
            penalty = strength * math.fsum(decay ** (position - p) for p in occ)
            penalized[tid] = lp - penalty
        else:
            penalized[tid] = lp
    return TokenDistribution(entries=log_normalize(penalized), k=dist.k)


_FALLBACK_HEADER = "Continue so the text leads into:"


class LMBackend(ABC):
    """Uniform interface over language-model backends."""

    tokenizer: WordTokenizer
    context_window: int = DEFAULT_CONTEXT_WINDOW
    eot_marker: str = "<|endoftext|>"

    @abstractmethod
    def complete(self, request: CompletionRequest) -> list[str]:
        """num_candidates independent completions for the request."""

    @abstractmethod
    def _insert_native(self, prefix: str, suffix: str, request: CompletionRequest) -> list[str]:
        """Native insertion; raise CapabilityError when unsupported."""

    @abstractmethod
    def next_distribution(self, session: DecodingSession, k: int) -> TokenDistribution:
        """Top-k temperature-scaled log-probabilities, before any penalty."""

    def complete_one(self, prompt: str, *, max_tokens: int = 64,
                     temperature: float = 1.0,
                     stop_sequences: list[str] | None = None) -> str:
        request = CompletionRequest(
            prompt=prompt, max_tokens=max_tokens, temperature=temperature,
            stop_sequences=list(stop_sequences or []))
        return self.complete(request)[0]

    def insert(self, prefix: str, suffix: str, *, max_tokens: int = 64,
               temperature: float = 1.0, num_candidates: int = 1,
               stop_sequences: list[str] | None = None) -> InsertionResult:
        request = CompletionRequest(
            prompt=prefix, suffix=suffix or None, max_tokens=max_tokens,
            temperature=temperature, num_candidates=num_candidates,
            stop_sequences=list(stop_sequences or []))
        if not suffix:
            return InsertionResult(texts=self.complete(request), via_fallback=False)
        try:
            return InsertionResult(texts=self._insert_native(prefix, suffix, request),
                                   via_fallback=False)
        except CapabilityError:
            wrapped = f"{_FALLBACK_HEADER}\n{suffix}\n\n{prefix}"
            fallback = CompletionRequest(
                prompt=wrapped, max_tokens=max_tokens, temperature=temperature,
                num_candidates=num_candidates, stop_sequences=list(stop_sequences or []))
            return InsertionResult(texts=self.complete(fallback), via_fallback=True)

    def start_session(self, prompt: str, *, temperature: float = 0.8,
                      penalty_strength: float = 1.0, penalty_decay: float = 0.98) -> DecodingSession:
        return DecodingSession.from_prompt(
            self.tokenizer, prompt, temperature=temperature,
            penalty_strength=penalty_strength, penalty_decay=penalty_decay,
            context_window=self.context_window)
