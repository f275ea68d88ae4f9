"""Breadth-first outline expansion with candidate filtering and reranking.

Children are generated one slot at a time until an end-of-text signal or an
empty survivor set closes the list.  A sibling set whose size falls outside
[min_children, max_children] is discarded and regenerated at a higher
temperature; when retries run out the parent stays a leaf and records why.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .backends.base import LMBackend
from .errors import BudgetError
from .prompts import EventSlot, render_event_slot
from .scorers.base import ScorerSuite
from .story import OutlineNode, Plan
from .textops import edit_similarity_at_least

logger = logging.getLogger(__name__)

BANNED_CHARS = set("<>[]{}|\\^~")
# interrogative/imperative openers; candidates starting with one are not
# declarative sentences
CUE_WORDS = {
    "Who", "What", "When", "Where", "Why", "How",
    "Do", "Does", "Did", "Is", "Are", "Was", "Were", "Please",
}
SENTENCE_FINAL = (".", "!", "?")

LEAF_RETRY_EXHAUSTED = "retry-exhausted"
LEAF_EMPTY_FILTER = "empty-filter"


@dataclass(frozen=True)
class OutlinerConfig:
    max_depth: int = 3
    min_children: int = 2
    max_children: int = 5
    candidates_per_event: int = 10
    event_token_min: int = 3
    event_token_max: int = 50
    repetition_similarity_threshold: float = 0.8
    entailment_threshold: float = 0.5
    max_expansion_retries: int = 2
    base_temperature: float = 1.2
    retry_temperature_step: float = 0.1

    def violations(self) -> list[str]:
        out = []
        if not 1 <= self.min_children <= self.max_children:
            out.append("need 1 <= min_children <= max_children")
        if self.max_depth < 1:
            out.append("max_depth must be >= 1")
        if self.candidates_per_event < 1:
            out.append("candidates_per_event must be >= 1")
        return out


@dataclass(frozen=True)
class Slot:
    """One open child position: the parent and the 0-based position."""

    parent_id: str
    position: int


@dataclass(frozen=True)
class Candidate:
    text: str
    end_of_text: bool
    index: int


def parse_candidate(raw: str, index: int, eot_marker: str) -> Candidate:
    """Split a raw completion into event text and an end-of-text flag.

    A completion that is empty after stripping also counts as end-of-text,
    for backends without an explicit marker.
    """
    cut = raw.find(eot_marker)
    if cut >= 0:
        return Candidate(text=raw[:cut].strip(), end_of_text=True, index=index)
    text = raw.strip()
    if not text:
        return Candidate(text="", end_of_text=True, index=index)
    return Candidate(text=text, end_of_text=False, index=index)


def propose_event_candidates(
    slot: Slot,
    plan: Plan,
    config: OutlinerConfig,
    backend: LMBackend,
    *,
    temperature: float | None = None,
) -> list[str]:
    """Exactly candidates_per_event raw completions for the slot."""
    rendered: EventSlot = render_event_slot(plan, slot.parent_id)
    try:
        result = backend.insert(
            rendered.prefix,
            rendered.suffix,
            max_tokens=config.event_token_max + 14,
            temperature=config.base_temperature if temperature is None else temperature,
            num_candidates=config.candidates_per_event,
        )
    except BudgetError as exc:
        raise BudgetError(
            f"slot {slot.parent_id}[{slot.position}]: {exc}"
        ) from exc
    if result.via_fallback:
        logger.warning(
            "slot %s[%d]: served via completion fallback (no native insertion)",
            slot.parent_id,
            slot.position,
        )
    return result.texts


def _is_declarative(text: str) -> bool:
    if text.endswith("?"):
        return False
    first = text.split(None, 1)[0] if text.split() else ""
    return first not in CUE_WORDS


def filter_candidates(
    candidates: list[str],
    tree,
    slot: Slot,
    config: OutlinerConfig,
    scorers: ScorerSuite,
    *,
    tokenizer=None,
    token_counter=None,
) -> list[str]:
    """Surface-form and repetition filters; order-preserving, idempotent.

    A candidate is repetitive if, against any node outside the slot's
    ancestor chain, its normalized edit similarity reaches the threshold or
    entailment (either direction) exceeds the threshold.
    """
    count = token_counter or (tokenizer.count if tokenizer is not None else None)
    if count is None:
        raise TypeError("filter_candidates needs tokenizer or token_counter")
    chain = set(tree.ancestor_ids(slot.parent_id)) | {slot.parent_id}
    others = [
        node.event_text
        for node in tree.pre_order()
        if node.id not in chain and node.depth >= 1
    ]
    survivors = []
    for text in candidates:
        if not text or not text[0].isupper():
            continue
        if not text.endswith(SENTENCE_FINAL):
            continue
        if not _is_declarative(text):
            continue
        if any(ch in BANNED_CHARS for ch in text):
            continue
        tokens = count(text)
        if not config.event_token_min <= tokens <= config.event_token_max:
            continue
        if any(_repetitive(text, other, config, scorers) for other in others):
            continue
        survivors.append(text)
    return survivors


def _repetitive(
    candidate: str, other: str, config: OutlinerConfig, scorers: ScorerSuite
) -> bool:
    if edit_similarity_at_least(
        candidate, other, config.repetition_similarity_threshold
    ):
        return True
    threshold = config.entailment_threshold
    if scorers.entailment(other, candidate) > threshold:
        return True
    return scorers.entailment(candidate, other) > threshold


def rerank_candidates(
    survivors: list[str],
    slot: Slot,
    plan: Plan,
    scorers: ScorerSuite,
) -> int:
    """Index of the winning survivor.

    The first child is chosen by similarity to the parent event (the premise
    when the parent is the root).  Later children are chosen by the ordering
    model over a pseudo-story: parent event, accepted siblings, the
    candidate, then the following shallower events.
    """
    if not survivors:
        raise ValueError("rerank_candidates needs a non-empty survivor list")
    tree = plan.tree
    parent = tree.node(slot.parent_id)
    parent_event = (
        plan.premise.text if slot.parent_id == tree.root_id else parent.event_text
    )
    if slot.position == 0:
        scores = [scorers.similarity(text, parent_event) for text in survivors]
    else:
        siblings = [tree.node(cid).event_text for cid in parent.children]
        suffix_events = _suffix_events(plan, slot.parent_id)
        scores = []
        for text in survivors:
            pseudo = " ".join([parent_event, *siblings, text, *suffix_events])
            scores.append(scorers.ordering(pseudo, text))
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    return best


def _suffix_events(plan: Plan, parent_id: str) -> list[str]:
    """Events of the shallower items that follow the parent's subtree."""
    tree = plan.tree
    slot_depth = tree.node(parent_id).depth + 1
    subtree = {parent_id}

    def mark(node_id: str) -> None:
        for child in tree.node(node_id).children:
            subtree.add(child)
            mark(child)

    mark(parent_id)
    order = tree.pre_order()
    start = next(i for i, n in enumerate(order) if n.id == parent_id) + 1
    while start < len(order) and order[start].id in subtree:
        start += 1
    return [
        node.event_text
        for node in order[start:]
        if 1 <= node.depth < slot_depth
    ]


def generate_children(
    parent: OutlineNode,
    plan: Plan,
    config: OutlinerConfig,
    backend: LMBackend,
    scorers: ScorerSuite,
) -> list[OutlineNode]:
    """Grow one sibling set under ``parent``, with the retry ladder.

    Accepted children are added to the tree as they are chosen so that later
    slots see them; an out-of-bounds set is deleted wholesale before the next
    attempt.
    """
    tree = plan.tree
    attempts = 1 + config.max_expansion_retries
    last_empty_first_slot = False
    for attempt in range(attempts):
        temperature = config.base_temperature + attempt * config.retry_temperature_step
        child_ids: list[str] = []
        last_empty_first_slot = False
        while len(child_ids) <= config.max_children:
            slot = Slot(parent_id=parent.id, position=len(child_ids))
            raw = propose_event_candidates(
                slot, plan, config, backend, temperature=temperature
            )
            parsed = [
                parse_candidate(text, index, backend.eot_marker)
                for index, text in enumerate(raw)
            ]
            survivors = filter_candidates(
                [c.text for c in parsed],
                tree,
                slot,
                config,
                scorers,
                token_counter=backend.tokenizer.count,
            )
            if not survivors:
                last_empty_first_slot = slot.position == 0
                break
            # survivors are an order-preserving subsequence; walk both lists
            # to recover each survivor's original candidate (and its flag)
            survivor_candidates: list[Candidate] = []
            pending = list(survivors)
            for candidate in parsed:
                if pending and candidate.text == pending[0]:
                    survivor_candidates.append(candidate)
                    pending.pop(0)
            chosen_pos = rerank_candidates(survivors, slot, plan, scorers)
            chosen = survivor_candidates[chosen_pos]
            child = tree.add_child(parent.id, chosen.text)
            child_ids.append(child.id)
            if chosen.end_of_text:
                break
        if config.min_children <= len(child_ids) <= config.max_children:
            return [tree.node(cid) for cid in child_ids]
        logger.info(
            "node %s: %d children out of bounds [%d, %d] at temperature %.1f "
            "(attempt %d/%d)",
            parent.id,
            len(child_ids),
            config.min_children,
            config.max_children,
            temperature,
            attempt + 1,
            attempts,
        )
        for cid in child_ids:
            tree.delete_subtree(cid)
    parent.leaf_reason = (
        LEAF_EMPTY_FILTER if last_empty_first_slot else LEAF_RETRY_EXHAUSTED
    )
    logger.warning("node %s: kept as a leaf (%s)", parent.id, parent.leaf_reason)
    return []


def expand_outline(
    plan: Plan,
    config: OutlinerConfig,
    backend: LMBackend,
    scorers: ScorerSuite,
    *,
    to_depth: int | None = None,
) -> Plan:
    """Expand breadth-first until every parent at depth < to_depth is grown.

    Parents that already have children (resumed runs, human edits) are left
    alone, as are leaves flagged by an earlier exhausted retry ladder.
    """
    problems = config.violations()
    if problems:
        raise ValueError("; ".join(problems))
    limit = config.max_depth if to_depth is None else min(to_depth, config.max_depth)
    tree = plan.tree
    for depth in range(0, limit):
        parents = sorted(
            (n for n in tree.pre_order() if n.depth == depth),
            key=lambda n: n.creation_index,
        )
        for parent in parents:
            if parent.children or parent.leaf_reason:
                continue
            generate_children(parent, plan, config, backend, scorers)
    return plan
