"""Leaf-by-leaf drafting: structured prompt assembly under a fixed token
budget, candidate generation through the controlled decoder, reranking by
relevance plus coherence, early stopping, and paragraph cleanup.  Also the
rolling-window baseline that skips planning altogether.

The prompt carries ten sections in fixed order; when the assembled prompt
does not fit in context_window - substep_tokens, the previous-passage tail
shrinks first (oldest paragraphs dropped), then the far-past summary
(oldest items dropped), then the near-past summary.  Instructional sections
never shrink; if they alone overflow, drafting fails loudly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from .backends.base import LMBackend
from .controller import StrengthSchedule, build_constraints, decode_passage
from .entities import description_at
from .errors import BudgetError
from .prompts import (
    DRAFT_SEPARATOR,
    render,
    render_summarize_prompt,
    rolling_first_prompt,
    rolling_later_prompt,
)
from .scorers.base import ScorerSuite
from .seeding import stable_rng
from .story import OutlineNode, Passage, Plan, RunState, leaves_in_order
from .textops import ngram_repetition_ratio

logger = logging.getLogger(__name__)

ROLLING_TOKENS_PER_ITEM = 256
NEAR_PAST_PARAGRAPHS = 3


@dataclass(frozen=True)
class DraftConfig:
    substep_tokens: int = 64
    max_substeps: int = 8
    candidates_per_substep: int = 8
    early_stop_threshold: float = -0.5
    paragraph_truncation_min_tokens: int = 10
    context_window: int = 1024
    drafting_temperature: float = 0.8
    top_k: int = 100
    penalize_before_fusion: bool = True
    length_normalize_scores: bool = True
    repetition_ratio_limit: float = 0.5

    def violations(self) -> list[str]:
        out = []
        for name in (
            "substep_tokens",
            "max_substeps",
            "candidates_per_substep",
            "paragraph_truncation_min_tokens",
            "context_window",
            "top_k",
        ):
            if getattr(self, name) <= 0:
                out.append(f"{name} must be positive")
        if self.drafting_temperature <= 0:
            out.append("drafting_temperature must be positive")
        if self.early_stop_threshold >= 0:
            out.append("early_stop_threshold must be negative")
        if self.context_window <= self.substep_tokens:
            out.append("context_window must exceed substep_tokens")
        return out


def should_stop(score_history: list[float], threshold: float = -0.5) -> bool:
    """True when the previous substep beat the threshold and the latest one
    did not improve on it."""
    if len(score_history) < 2:
        return False
    return score_history[-2] > threshold and score_history[-1] < score_history[-2]


def truncate_incomplete_paragraph(
    text: str, token_counter, min_tokens: int = 10
) -> str:
    """Drop a trailing unfinished paragraph fewer than min_tokens in."""
    idx = text.rfind("\n")
    if idx < 0:
        return text
    fragment = text[idx + 1 :]
    stripped = fragment.rstrip()
    if not stripped:
        return text
    complete = stripped[-1] in ".!?" or (
        stripped[-1] in "\"'" and len(stripped) >= 2 and stripped[-2] in ".!?"
    )
    if complete or token_counter(fragment) >= min_tokens:
        return text
    return text[:idx].rstrip()


# -- prompt assembly ---------------------------------------------------------


def story_text_so_far(state: RunState) -> str:
    parts = [p.text for p in state.passages if p.text]
    return "\n\n".join(parts)


def far_past_items(state: RunState, leaf: OutlineNode) -> list[str]:
    """Events of drafted items, whole subtrees collapsed to their roots.

    Ancestors of the current leaf are incomplete by definition, so they
    contribute their own event and the walk descends; the current leaf ends
    the walk and contributes nothing.
    """
    plan = state.plan
    tree = plan.tree
    drafted = {p.leaf_id for p in state.passages}
    ancestors = set(tree.ancestor_ids(leaf.id))
    items: list[str] = []

    def complete(node: OutlineNode) -> bool:
        if not node.children:
            return node.id in drafted
        return all(complete(child) for child in tree.children_of(node))

    def walk(node: OutlineNode) -> bool:
        for child in tree.children_of(node):
            if child.id == leaf.id:
                return False
            if child.id in ancestors:
                items.append(child.event_text)
                if not walk(child):
                    return False
            elif complete(child):
                items.append(child.event_text)
            else:
                if not walk(child):
                    return False
        return True

    walk(tree.root)
    return items


def far_past_summary(state: RunState, leaf: OutlineNode) -> str:
    return " ".join(far_past_items(state, leaf))


def near_past_summary(
    state: RunState, backend: LMBackend, *, partial_text: str = ""
) -> str:
    story = story_text_so_far(state)
    if partial_text:
        story = f"{story}\n\n{partial_text}" if story else partial_text
    paragraphs = [p for p in story.split("\n") if p.strip()]
    if not paragraphs:
        return ""
    recent = "\n".join(paragraphs[-NEAR_PAST_PARAGRAPHS:])
    prompt = render_summarize_prompt(recent)
    return backend.complete_one(prompt, max_tokens=96).strip()


def scene_characters(state: RunState, plan: Plan) -> list[str]:
    """Inventory names string-matched in the most recent passage."""
    previous = ""
    for passage in reversed(state.passages):
        if passage.text:
            previous = passage.text
            break
    if not previous:
        return []
    names = []
    for record in plan.inventory:
        first_word = record.full_name.split()[0]
        if record.full_name in previous or f" {first_word} " in f" {previous} ":
            names.append(record.full_name)
    return names


def _neighbor_events(plan: Plan, leaf: OutlineNode) -> tuple[str | None, str | None]:
    leaves = leaves_in_order(plan.tree)
    ids = [n.id for n in leaves]
    pos = ids.index(leaf.id)
    prev_event = leaves[pos - 1].event_text if pos > 0 else None
    next_event = leaves[pos + 1].event_text if pos + 1 < len(leaves) else None
    return prev_event, next_event


def _setting_section(plan: Plan, leaf: OutlineNode) -> str:
    leaves = leaves_in_order(plan.tree)
    ids = [n.id for n in leaves]
    pos = ids.index(leaf.id)
    previous = leaves[pos - 1].setting if pos > 0 else None
    if previous and previous != leaf.setting:
        return render(
            "draft", "setting_move", from_setting=previous, to_setting=leaf.setting
        )
    return render("draft", "setting_stay", setting=leaf.setting)


def assemble_prompt(
    state: RunState,
    leaf: OutlineNode,
    config: DraftConfig,
    backend: LMBackend,
    *,
    partial_text: str = "",
) -> str:
    """The ten-section drafting prompt, trimmed to fit the token budget."""
    plan = state.plan
    tree = plan.tree
    ancestor_events = [
        tree.node(a).event_text for a in tree.ancestor_ids(leaf.id) if tree.node(a).depth >= 1
    ]
    premise_source = " ".join(ancestor_events) if ancestor_events else plan.premise.text
    premise_block = render("draft", "premise", premise=premise_source)
    style_block = render("draft", "style")

    context_paragraphs = [
        description_at(record, leaf.creation_index)
        for name in leaf.character_names
        if (record := plan.character(name)) is not None
    ]
    relevant_block = (
        "\n\n".join([render("draft", "relevant_context"), *context_paragraphs])
        if context_paragraphs
        else None
    )

    far_items = far_past_items(state, leaf)
    near = near_past_summary(state, backend, partial_text=partial_text)
    scene = scene_characters(state, plan)

    prev_event, next_event = _neighbor_events(plan, leaf)
    upcoming_events = " ".join(
        e for e in (prev_event, leaf.event_text, next_event) if e
    )
    upcoming_block = render("draft", "upcoming", events=upcoming_events)
    setting_block = _setting_section(plan, leaf)

    story = story_text_so_far(state)
    if partial_text:
        story = f"{story}\n\n{partial_text}" if story else partial_text
    tail_paragraphs = [p for p in story.split("\n") if p.strip()]

    budget = config.context_window - config.substep_tokens
    count = backend.tokenizer.count

    def build(far: list[str], near_text: str, tail: list[str]) -> str:
        blocks = [premise_block, style_block]
        if relevant_block:
            blocks.append(relevant_block)
        if far:
            blocks.append(render("draft", "far_past", summary=" ".join(far)))
        if near_text:
            blocks.append(render("draft", "near_past", summary=near_text))
        if scene:
            blocks.append(
                render("draft", "scene_characters", names=", ".join(scene))
            )
        blocks.append(upcoming_block)
        blocks.append(setting_block)
        blocks.append(render("draft", "full_text"))
        blocks.append(DRAFT_SEPARATOR)
        if tail:
            blocks.append("\n".join(tail))
        return "\n\n".join(blocks)

    far = list(far_items)
    tail = list(tail_paragraphs)
    near_text = near
    prompt = build(far, near_text, tail)
    while count(prompt) > budget:
        if tail:
            tail.pop(0)
        elif far:
            far.pop(0)
        elif near_text:
            near_text = ""
        else:
            raise BudgetError(
                f"leaf {leaf.id}: fixed prompt sections need "
                f"{count(prompt)} tokens; budget is {budget}"
            )
        prompt = build(far, near_text, tail)
    return prompt


# -- drafting ----------------------------------------------------------------


def _previous_leaf(plan: Plan, leaf: OutlineNode) -> OutlineNode | None:
    leaves = leaves_in_order(plan.tree)
    ids = [n.id for n in leaves]
    pos = ids.index(leaf.id)
    return leaves[pos - 1] if pos > 0 else None


def draft_leaf(
    state: RunState,
    leaf: OutlineNode,
    config: DraftConfig,
    backend: LMBackend,
    scorers: ScorerSuite,
    *,
    seed: int = 0,
    on_substep: Callable[[int, str], None] | None = None,
) -> Passage:
    """A variable-length passage for one leaf.

    Each substep decodes candidates_per_substep continuations, drops the
    repetitive ones, reranks the rest by relevance plus coherence, and
    appends the winner.  Early stopping discards the substep that triggered
    it.  All candidates repetitive at the first substep skips the leaf; at a
    later substep it just ends the passage.
    """
    problems = config.violations()
    if problems:
        raise ValueError("; ".join(problems))
    plan = state.plan
    constraints = build_constraints(leaf, _previous_leaf(plan, leaf), plan)
    schedule = StrengthSchedule()
    tokenizer = backend.tokenizer
    passage_text = ""
    history: list[float] = []
    kept_scores: list[tuple[float, float]] = []
    substeps_used = 0

    for substep in range(config.max_substeps):
        prompt = assemble_prompt(
            state, leaf, config, backend, partial_text=passage_text
        )
        assert tokenizer.count(prompt) <= config.context_window - config.substep_tokens
        candidates: list[tuple[str, list[int]]] = []
        for cand in range(config.candidates_per_substep):
            session = backend.start_session(
                prompt, temperature=config.drafting_temperature
            )
            rng = stable_rng(seed, "draft", leaf.id, substep, cand)
            result = decode_passage(
                session,
                constraints,
                schedule,
                substep,
                backend,
                scorers,
                rng,
                length=config.substep_tokens,
                top_k=config.top_k,
                penalize_before_fusion=config.penalize_before_fusion,
            )
            candidates.append((result.text(tokenizer), result.token_ids))

        usable = [
            (text, ids)
            for text, ids in candidates
            if ngram_repetition_ratio(ids, 4) <= config.repetition_ratio_limit
        ]
        if not usable:
            if substep == 0:
                logger.warning("leaf %s: all candidates repetitive; skipped", leaf.id)
                return Passage(
                    leaf_id=leaf.id,
                    text="",
                    substeps_used=0,
                    final_scores=[],
                    skipped=True,
                )
            logger.warning(
                "leaf %s: all candidates repetitive at substep %d; passage ends",
                leaf.id,
                substep,
            )
            break

        context = story_text_so_far(state)
        if passage_text:
            context = f"{context}\n\n{passage_text}" if context else passage_text
        scored: list[tuple[float, float, float]] = []
        for text, ids in usable:
            relevance = scorers.relevance(leaf.event_text, text)
            coherence = scorers.coherence(context, text)
            if config.length_normalize_scores:
                denom = max(1, len(ids))
                relevance /= denom
                coherence /= denom
            scored.append((relevance + coherence, relevance, coherence))
        best = max(range(len(scored)), key=lambda i: (scored[i][0], -i))
        combined, relevance, coherence = scored[best]
        chosen = truncate_incomplete_paragraph(
            usable[best][0], tokenizer.count, config.paragraph_truncation_min_tokens
        )
        history.append(combined)
        if should_stop(history, config.early_stop_threshold):
            logger.debug(
                "leaf %s: early stop after substep %d", leaf.id, substep - 1
            )
            break
        passage_text = (passage_text + chosen).lstrip() if chosen else passage_text
        kept_scores.append((relevance, coherence))
        substeps_used = substep + 1
        if on_substep is not None:
            on_substep(substep, chosen)

    return Passage(
        leaf_id=leaf.id,
        text=passage_text,
        substeps_used=substeps_used,
        final_scores=kept_scores,
        skipped=False,
    )


# -- story composition --------------------------------------------------------


@dataclass
class StorySpan:
    start: int
    leaf_id: str


@dataclass
class StoryOutput:
    text: str
    spans: list[StorySpan] = field(default_factory=list)


def compose_story(state: RunState) -> StoryOutput:
    """Concatenated passages with character offsets back to their leaves."""
    parts: list[str] = []
    spans: list[StorySpan] = []
    offset = 0
    for passage in state.passages:
        if not passage.text:
            continue
        if parts:
            parts.append("\n\n")
            offset += 2
        spans.append(StorySpan(start=offset, leaf_id=passage.leaf_id))
        parts.append(passage.text)
        offset += len(passage.text)
    return StoryOutput(text="".join(parts), spans=spans)


# -- rolling-window baseline ----------------------------------------------------


def rolling_window_baseline(
    premise_text: str,
    top_level_events: list[str],
    backend: LMBackend,
    config: DraftConfig | None = None,
    *,
    tokens_per_item: int = ROLLING_TOKENS_PER_ITEM,
) -> StoryOutput:
    """Flat generation over top-level items with a trailing story window."""
    if not top_level_events:
        raise ValueError("rolling baseline needs at least one top-level event")
    config = config or DraftConfig()
    tokenizer = backend.tokenizer
    story = ""
    spans: list[StorySpan] = []
    for pos, event in enumerate(top_level_events):
        if pos == 0:
            prompt = rolling_first_prompt(premise_text, event)
        else:
            skeleton = rolling_later_prompt(premise_text, event, "")
            window = config.context_window - tokens_per_item - tokenizer.count(skeleton)
            tail_ids = tokenizer.encode(story)
            if window > 0:
                tail = tokenizer.decode(tail_ids[-window:])
            else:
                tail = ""
            prompt = rolling_later_prompt(premise_text, event, tail)
        completion = backend.complete_one(
            prompt,
            max_tokens=tokens_per_item,
            temperature=config.drafting_temperature,
        ).strip()
        if story:
            spans.append(StorySpan(start=len(story) + 2, leaf_id=f"item-{pos}"))
            story = f"{story}\n\n{completion}"
        else:
            spans.append(StorySpan(start=0, leaf_id=f"item-{pos}"))
            story = completion
    return StoryOutput(text=story, spans=spans)
