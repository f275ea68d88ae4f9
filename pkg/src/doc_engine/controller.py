"""Controlled decoding: constraint construction, the strength schedule,
discriminator logit fusion over the top-k support, and the contrastive
dataset builder for training prefix discriminators.

Fusion adds, for every candidate token, each constraint's discriminator
log-probability scaled by strength times the constraint weight, then
renormalizes over the same support.  Strength ramps 0, 3, 6, 9, 10 and stays
capped; it resets per leaf (the drafter's duty).
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .backends.base import (
    DecodingSession,
    LMBackend,
    TokenDistribution,
    WordTokenizer,
    apply_frequency_penalty,
    log_normalize,
)
from .scorers.base import ScorerSuite
from .story import OutlineNode, Plan
from .textops import sentence_end_offsets, split_sentences

logger = logging.getLogger(__name__)

DEFAULT_TOP_K = 100


class ConstraintKind(str, Enum):
    EVENT = "event"
    SETTING = "setting"
    CHARACTER = "character"


CONSTRAINT_WEIGHTS = {
    ConstraintKind.EVENT: 1.0,
    ConstraintKind.SETTING: 0.5,
    ConstraintKind.CHARACTER: 0.2,
}


@dataclass(frozen=True)
class ControlConstraint:
    kind: ConstraintKind
    summary: str

    @property
    def weight(self) -> float:
        return CONSTRAINT_WEIGHTS[self.kind]

    def violations(self) -> list[str]:
        return [] if self.summary.strip() else ["constraint: empty summary"]


@dataclass(frozen=True)
class StrengthSchedule:
    start: float = 0
    increment: float = 3
    cap: float = 10


def strength_at(schedule: StrengthSchedule, substep: int) -> float:
    if substep < 0:
        raise ValueError("substep must be >= 0")
    return min(schedule.cap, schedule.start + schedule.increment * substep)


def build_constraints(
    current_leaf: OutlineNode, previous_leaf: OutlineNode | None, plan: Plan
) -> list[ControlConstraint]:
    """Event always; Setting on change (or first leaf); Character per new name.

    The first leaf counts as a setting change but gets no Character
    constraints, so one fresh scene is not flooded with every name at once.
    """
    out = [ControlConstraint(ConstraintKind.EVENT, current_leaf.event_text)]
    previous_setting = previous_leaf.setting if previous_leaf is not None else None
    if current_leaf.setting and current_leaf.setting != previous_setting:
        out.append(
            ControlConstraint(
                ConstraintKind.SETTING,
                f"The characters move to {current_leaf.setting}.",
            )
        )
    if previous_leaf is not None:
        known = set(previous_leaf.character_names)
        for name in current_leaf.character_names:
            if name not in known:
                out.append(
                    ControlConstraint(ConstraintKind.CHARACTER, f"{name} is present.")
                )
    return out


def fuse_logits(
    base: TokenDistribution,
    constraints: Sequence[ControlConstraint],
    strength: float,
    scorers: ScorerSuite,
    prefix_text: str,
    tokenizer: WordTokenizer,
) -> TokenDistribution:
    """Add scaled discriminator logits per token and renormalize.

    Zero strength or no constraints returns the input distribution untouched
    (exact vector identity, not merely the same argmax).  Transport errors
    from the discriminator propagate so the substep aborts.
    """
    if strength == 0 or not constraints:
        return base
    tokens = list(base.entries.keys())
    extensions = [tokenizer.token_text(t) for t in tokens]
    adjustments = [0.0] * len(tokens)
    for constraint in constraints:
        scale = strength * constraint.weight
        scores = scorers.discriminator_extensions(
            constraint.summary, prefix_text, extensions
        )
        for i, score in enumerate(scores):
            adjustments[i] += scale * score
    fused = {t: base.entries[t] + adjustments[i] for i, t in enumerate(tokens)}
    return TokenDistribution(entries=log_normalize(fused), k=base.k)


@dataclass
class DecodeResult:
    token_ids: list[int]
    overflow: bool = False

    def text(self, tokenizer: WordTokenizer) -> str:
        return "".join(tokenizer.token_text(t) for t in self.token_ids)


def sample_token(dist: TokenDistribution, rng: random.Random) -> int:
    """Categorical draw over the distribution's support, insertion order."""
    r = rng.random()
    acc = 0.0
    last = None
    for tid, lp in dist.entries.items():
        acc += math.exp(lp)
        last = tid
        if r < acc:
            return tid
    return last  # floating-point shortfall lands on the final token


def decode_passage(
    session: DecodingSession,
    constraints: Sequence[ControlConstraint],
    schedule: StrengthSchedule,
    substep: int,
    backend: LMBackend,
    scorers: ScorerSuite,
    rng: random.Random,
    *,
    length: int = 64,
    top_k: int = DEFAULT_TOP_K,
    penalize_before_fusion: bool = True,
) -> DecodeResult:
    """length tokens appended to the session under fused control.

    Context overflow mid-passage stops early and flags the result rather
    than raising; the caller decides whether a short substep is usable.
    """
    strength = strength_at(schedule, substep)
    out: list[int] = []
    for _ in range(length):
        if session.remaining <= 0:
            return DecodeResult(token_ids=out, overflow=True)
        base = backend.next_distribution(session, top_k)
        prefix_text = session.text()
        if penalize_before_fusion:
            dist = apply_frequency_penalty(base, session)
            dist = fuse_logits(dist, constraints, strength, scorers, prefix_text,
                               session.tokenizer)
        else:
            dist = fuse_logits(base, constraints, strength, scorers, prefix_text,
                               session.tokenizer)
            dist = apply_frequency_penalty(dist, session)
        token = sample_token(dist, rng)
        session.append(token)
        out.append(token)
    return DecodeResult(token_ids=out, overflow=False)


# -- contrastive dataset -----------------------------------------------------


class PrefixLabel(str, Enum):
    MATCH = "match"
    NO_MATCH = "no_match"


class Provenance(str, Enum):
    POSITIVE = "positive"
    HARD_NEGATIVE = "hard_negative"
    HARDER_NEGATIVE = "harder_negative"
    HARDER_POSITIVE = "harder_positive"


def default_token_counter(text: str) -> int:
    return len(text.split())


@dataclass
class ControllerExample:
    summary: str
    passage: str
    provenance: Provenance
    splice_char_offset: int | None = None
    prefix_labels: list[tuple[int, PrefixLabel]] = field(default_factory=list)

    def violations(self) -> list[str]:
        out = []
        if not self.passage.strip():
            out.append("example: empty passage")
        spliced = self.provenance in (
            Provenance.HARDER_NEGATIVE,
            Provenance.HARDER_POSITIVE,
        )
        if spliced and self.splice_char_offset is None:
            out.append("example: spliced provenance without a splice offset")
        if not spliced and self.splice_char_offset is not None:
            out.append("example: splice offset on an unspliced example")
        return out


def prefix_labels_for(
    passage: str,
    splice_char_offset: int | None,
    provenance: Provenance,
    token_counter: Callable[[str], int] = default_token_counter,
) -> list[tuple[int, PrefixLabel]]:
    """(token-prefix length, label) at every sentence boundary of the passage."""
    labels: list[tuple[int, PrefixLabel]] = []
    for offset in sentence_end_offsets(passage):
        if provenance is Provenance.POSITIVE:
            label = PrefixLabel.MATCH
        elif provenance is Provenance.HARD_NEGATIVE:
            label = PrefixLabel.NO_MATCH
        elif provenance is Provenance.HARDER_NEGATIVE:
            label = (
                PrefixLabel.MATCH
                if offset <= splice_char_offset
                else PrefixLabel.NO_MATCH
            )
        else:
            label = (
                PrefixLabel.NO_MATCH
                if offset <= splice_char_offset
                else PrefixLabel.MATCH
            )
        labels.append((token_counter(passage[:offset]), label))
    return labels


def _example(
    summary: str,
    passage: str,
    provenance: Provenance,
    splice: int | None,
    token_counter: Callable[[str], int],
) -> ControllerExample:
    return ControllerExample(
        summary=summary,
        passage=passage,
        provenance=provenance,
        splice_char_offset=splice,
        prefix_labels=prefix_labels_for(passage, splice, provenance, token_counter),
    )


def _other_index(rng: random.Random, own: int, count: int) -> int:
    pick = rng.randrange(count - 1)
    return pick + 1 if pick >= own else pick


def _splice(own: list[str], other: list[str], rng: random.Random) -> tuple[str, int]:
    """A spliced passage (own prefix + other tail) and its char offset."""
    keep = rng.randrange(1, len(own) + 1)
    start = rng.randrange(0, len(other))
    head = " ".join(own[:keep])
    return " ".join([head] + other[start:]), len(head)


def build_controller_dataset(
    stories: Sequence[Sequence[tuple[str, str]]],
    seed: int = 0,
    *,
    token_counter: Callable[[str], int] = default_token_counter,
) -> list[ControllerExample]:
    """Positives plus three contrastive classes from (summary, passage) pairs.

    Hard negatives pair a summary with a different passage from the same
    story.  Harder negatives keep the passage's own opening sentences and
    continue with another passage's tail; harder positives invert that.
    Stories contributing a single pair yield positives only.
    """
    rng = random.Random(seed)
    out: list[ControllerExample] = []
    for story_pos, pairs in enumerate(stories):
        pairs = list(pairs)
        if len(pairs) < 2:
            logger.warning(
                "story %d has %d pair(s); emitting positives only",
                story_pos,
                len(pairs),
            )
            for summary, passage in pairs:
                out.append(
                    _example(summary, passage, Provenance.POSITIVE, None, token_counter)
                )
            continue
        for own_pos, (summary, passage) in enumerate(pairs):
            out.append(
                _example(summary, passage, Provenance.POSITIVE, None, token_counter)
            )
            hard_other = pairs[_other_index(rng, own_pos, len(pairs))][1]
            out.append(
                _example(
                    summary, hard_other, Provenance.HARD_NEGATIVE, None, token_counter
                )
            )
            own_sentences = split_sentences(passage)
            other = pairs[_other_index(rng, own_pos, len(pairs))][1]
            other_sentences = split_sentences(other)
            if own_sentences and other_sentences:
                spliced, offset = _splice(own_sentences, other_sentences, rng)
                out.append(
                    _example(
                        summary,
                        spliced,
                        Provenance.HARDER_NEGATIVE,
                        offset,
                        token_counter,
                    )
                )
                spliced, offset = _splice(other_sentences, own_sentences, rng)
                out.append(
                    _example(
                        summary,
                        spliced,
                        Provenance.HARDER_POSITIVE,
                        offset,
                        token_counter,
                    )
                )
    return out


def write_controller_dataset(examples: Iterable[ControllerExample], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for example in examples:
            record = {
                "summary": example.summary,
                "passage": example.passage,
                "splice_char_offset": example.splice_char_offset,
                "provenance": example.provenance.value,
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
            count += 1
    return count


def read_controller_dataset(
    path: str | Path,
    *,
    token_counter: Callable[[str], int] = default_token_counter,
) -> list[ControllerExample]:
    out = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            provenance = Provenance(record["provenance"])
            out.append(
                _example(
                    record["summary"],
                    record["passage"],
                    provenance,
                    record["splice_char_offset"],
                    token_counter,
                )
            )
    return out
