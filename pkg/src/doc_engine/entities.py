"""Character inventory, per-node character detection, scene locations, and
time-indexed character facts.

Detection is prompt-driven: a numbered mention list, a single-vs-group
next-token probe for unnamed mentions, and a name-resolution prompt whose
inventory block is ordered least-relevant-first.  Facts accumulate per
character with entailment-based dedup: an entailed candidate is dropped, and
a candidate that entails an older fact retires that fact from the given
outline position onward.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum

from .backends.base import LMBackend
from .errors import StageError
from .prompts import (
    render_fact_prompt,
    render_inventory_line,
    render_inventory_prompt,
    render_mention_list_prompt,
    render_resolution_prompt,
    render_setting_slot,
    render_single_group_prompt,
)
from .scorers.base import ScorerSuite
from .story import CharacterRecord, OutlineNode, Plan, Premise, TimedFact, leaves_in_order
from .textops import first_sentence

logger = logging.getLogger(__name__)

MAX_INVENTORY = 10
MAX_CHARACTERS_PER_NODE = 5
MAX_GROUP_NAMES = 2
ENTAILMENT_THRESHOLD = 0.5
INVENTORY_ATTEMPTS = 3

_CAP_WORD = re.compile(r"^[A-Z][A-Za-z']*$")
_ARTICLES = {"the", "a", "an"}
_LIST_MARK = re.compile(r"\s*(\d+)\.\s*")
_LEADING_PRONOUN = re.compile(r"^(She|He|They|It)\b")


class MentionKind(str, Enum):
    NAMED = "named"
    SINGLE_UNNAMED = "single_unnamed"
    GROUP = "group"


@dataclass
class MentionResolution:
    mention: str
    kind: MentionKind
    resolved_names: list[str] = field(default_factory=list)


def is_valid_character_name(name: str) -> bool:
    """2-4 capitalized words, no digits."""
    words = name.split()
    if not 2 <= len(words) <= 4:
        return False
    if any(ch.isdigit() for ch in name):
        return False
    return all(_CAP_WORD.match(w) for w in words)


def _name_from_portrait_line(line: str) -> str | None:
    words = line.split()
    prefix: list[str] = []
    for word in words[:4]:
        if _CAP_WORD.match(word):
            prefix.append(word)
        else:
            break
    name = " ".join(prefix)
    if is_valid_character_name(name) and len(words) > len(prefix):
        return name
    return None


def build_character_inventory(
    premise: Premise, setting: str, backend: LMBackend
) -> list[CharacterRecord]:
    """Up to 10 records parsed from the character-list prompt."""
    prompt = render_inventory_prompt(premise.text, setting)
    for attempt in range(INVENTORY_ATTEMPTS):
        completions = backend.insert(
            prompt, "", max_tokens=320, temperature=1.0 + 0.1 * attempt
        )
        records: list[CharacterRecord] = []
        seen: set[str] = set()
        for raw_line in completions.texts[0].splitlines():
            line = raw_line.strip()
            if not line:
                continue
            name = _name_from_portrait_line(line)
            if name is None or name in seen:
                continue
            seen.add(name)
            records.append(CharacterRecord(full_name=name, portrait=line))
            if len(records) == MAX_INVENTORY:
                break
        if records:
            return records
        logger.warning(
            "character inventory attempt %d/%d yielded no valid names",
            attempt + 1,
            INVENTORY_ATTEMPTS,
        )
    raise StageError("inventory", "no valid character names after retries")


def description_at(record: CharacterRecord, outline_position: int) -> str:
    """Portrait plus the facts visible at the given outline position."""
    parts = [record.portrait]
    for index, fact in enumerate(record.facts):
        if fact.outline_position > outline_position:
            continue
        removed = record.removed_at.get(index)
        if removed is not None and removed <= outline_position:
            continue
        parts.append(fact.text)
    return " ".join(parts)


# -- mention list -----------------------------------------------------------


def _parse_numbered_items(text: str) -> tuple[list[str], bool]:
    """Items of a '1.'-continued list plus whether it ended mid-marker."""
    items: list[str] = []
    expected = 2
    rest = text
    open_ended = False
    while True:
        match = re.search(rf"\s{expected}\.(\s|$)", rest)
        if match is None:
            tail = rest.strip(" .,;:\n")
            if tail:
                items.append(tail)
            break
        head = rest[: match.start()].strip(" .,;:\n")
        if head:
            items.append(head)
        rest = rest[match.end():]
        if not rest.strip():
            open_ended = True
            break
        expected += 1
    return items, open_ended


def list_mentions(node: OutlineNode, backend: LMBackend, *, max_rounds: int = 4) -> list[str]:
    """Numbered mention list, continued while the model keeps numbering."""
    prompt = render_mention_list_prompt(node.event_text)
    collected: list[str] = []
    generated = ""
    for _ in range(max_rounds):
        completion = backend.complete_one(prompt + generated, max_tokens=64)
        generated += completion
        items, open_ended = _parse_numbered_items(generated)
        collected = items
        if not open_ended or len(collected) >= MAX_CHARACTERS_PER_NODE * 2:
            break
    out: list[str] = []
    for mention in collected:
        if mention and mention not in out:
            out.append(mention)
    return out


# -- single/group probe ------------------------------------------------------


def classify_single_or_group(
    event_text: str, mention: str, backend: LMBackend
) -> MentionKind:
    prompt = render_single_group_prompt(event_text, mention)
    session = backend.start_session(prompt, temperature=1.0)
    dist = backend.next_distribution(session, 100)
    single_id = _single_token_id(backend, "single")
    group_id = _single_token_id(backend, "group")
    lp_single = dist.entries.get(single_id) if single_id is not None else None
    lp_group = dist.entries.get(group_id) if group_id is not None else None
    if lp_single is None and lp_group is None:
        logger.warning(
            "probe for %r: neither ' single' nor ' group' in top-%d; assuming single",
            mention,
            dist.k,
        )
        return MentionKind.SINGLE_UNNAMED
    if lp_group is None:
        return MentionKind.SINGLE_UNNAMED
    if lp_single is None:
        return MentionKind.GROUP
    return MentionKind.SINGLE_UNNAMED if lp_single >= lp_group else MentionKind.GROUP


def _single_token_id(backend: LMBackend, piece: str) -> int | None:
    ids = backend.tokenizer.encode(piece)
    return ids[0] if len(ids) == 1 else None


# -- name resolution -----------------------------------------------------------


def _strip_article(mention: str) -> str:
    words = mention.split()
    if words and words[0].lower() in _ARTICLES:
        return " ".join(words[1:])
    return mention


def _is_named(mention: str) -> bool:
    return any(_CAP_WORD.match(w) for w in _strip_article(mention).split())


def match_inventory_name(
    mention: str, inventory: list[CharacterRecord]
) -> str | None:
    """Inventory name sharing the most capitalized words; ties by inventory order."""
    mention_words = {w for w in _strip_article(mention).split() if _CAP_WORD.match(w)}
    if not mention_words:
        return None
    best: str | None = None
    best_shared = 0
    for record in inventory:
        shared = len(mention_words & set(record.full_name.split()))
        if shared > best_shared:
            best_shared = shared
            best = record.full_name
    return best


def _inventory_lines_for(
    plan: Plan, node: OutlineNode, context: str, scorers: ScorerSuite
) -> list[str]:
    # least relevant first, so the strongest match sits nearest the question
    scored = [
        (scorers.similarity(description_at(r, node.creation_index), context), i, r)
        for i, r in enumerate(plan.inventory)
    ]
    scored.sort(key=lambda t: (t[0], t[1]))
    return [
        render_inventory_line(r.full_name, description_at(r, node.creation_index))
        for _, _, r in scored
    ]


def _previous_events(plan: Plan, node: OutlineNode, count: int = 2) -> list[str]:
    earlier = [
        n
        for n in plan.tree.pre_order()
        if n.depth >= 1 and n.creation_index < node.creation_index
    ]
    earlier.sort(key=lambda n: n.creation_index)
    return [n.event_text for n in earlier[-count:]]


def resolve_mention(
    mention: str,
    kind: MentionKind,
    node: OutlineNode,
    plan: Plan,
    resolved_so_far: list[str],
    backend: LMBackend,
    scorers: ScorerSuite,
) -> MentionResolution:
    resolution = MentionResolution(mention=mention, kind=kind)
    if kind is MentionKind.NAMED:
        name = match_inventory_name(mention, plan.inventory)
        if name is not None:
            resolution.resolved_names = [name]
        return resolution
    previous = _previous_events(plan, node)
    context = " ".join(previous + [node.event_text])
    prompt = render_resolution_prompt(
        _inventory_lines_for(plan, node, context, scorers),
        resolved_so_far,
        previous,
        node.event_text,
        mention,
        group=kind is MentionKind.GROUP,
    )
    completion = backend.complete_one(prompt, max_tokens=24)
    if kind is MentionKind.SINGLE_UNNAMED:
        name = _match_output_name(completion.strip().splitlines()[0] if completion.strip() else "", plan.inventory)
        if name is not None:
            resolution.resolved_names = [name]
        return resolution
    items, _ = _parse_numbered_items(completion)
    for item in items:
        name = _match_output_name(item, plan.inventory)
        if name is None:
            break  # output stopped matching the inventory
        if name not in resolution.resolved_names:
            resolution.resolved_names.append(name)
        if len(resolution.resolved_names) == MAX_GROUP_NAMES:
            break
    return resolution


def _match_output_name(text: str, inventory: list[CharacterRecord]) -> str | None:
    candidate = text.strip(" .,;:")
    for record in inventory:
        if record.full_name == candidate:
            return record.full_name
    return match_inventory_name(candidate, inventory)


def detect_characters(
    node: OutlineNode, plan: Plan, backend: LMBackend, scorers: ScorerSuite
) -> list[str]:
    """Resolved inventory names for one node, capped at 5, first-detected kept."""
    names: list[str] = []
    for mention in list_mentions(node, backend):
        if len(names) >= MAX_CHARACTERS_PER_NODE:
            break
        if _is_named(mention):
            kind = MentionKind.NAMED
        else:
            kind = classify_single_or_group(node.event_text, mention, backend)
        resolution = resolve_mention(
            mention, kind, node, plan, names, backend, scorers
        )
        if not resolution.resolved_names:
            logger.warning(
                "node %s: mention %r did not resolve to the inventory; dropped",
                node.id,
                mention,
            )
            continue
        for name in resolution.resolved_names:
            if name not in names and len(names) < MAX_CHARACTERS_PER_NODE:
                names.append(name)
    return names


# -- scene locations -------------------------------------------------------------


def detect_settings(plan: Plan, backend: LMBackend) -> Plan:
    """Fill every leaf's scene location, depth-first, reusing earlier ones."""
    previous: str | None = None
    for leaf in leaves_in_order(plan.tree):
        if leaf.setting:
            previous = leaf.setting
            continue
        slot = render_setting_slot(plan, leaf.id)
        completion = backend.insert(slot.prefix, slot.suffix, max_tokens=16).texts[0]
        setting = first_sentence(completion.strip()).rstrip(".").strip()
        if not setting:
            if previous is None:
                # no earlier scene to inherit; fall back to the story setting
                setting = plan.setting.rstrip(".")
                prefix = "The story is set in "
                if setting.startswith(prefix):
                    setting = setting[len(prefix):]
                logger.warning(
                    "leaf %s: empty location and no previous leaf; using %r",
                    leaf.id,
                    setting,
                )
            else:
                setting = previous
        leaf.setting = setting
        previous = setting
    return plan


# -- character facts ---------------------------------------------------------------


def canonicalize_fact(text: str, full_name: str) -> str:
    """Rewrite a fact so the subject is the full character name.

    The first occurrence of any single name word, or a leading pronoun, is
    replaced; text already containing the full name is returned as-is.
    """
    if full_name in text:
        return text
    for word in full_name.split():
        pattern = re.compile(rf"\b{re.escape(word)}\b")
        if pattern.search(text):
            return pattern.sub(full_name, text, count=1)
    if _LEADING_PRONOUN.match(text):
        return _LEADING_PRONOUN.sub(full_name, text, count=1)
    return text


def infer_character_fact(
    node: OutlineNode,
    record: CharacterRecord,
    plan: Plan,
    backend: LMBackend,
    scorers: ScorerSuite,
    *,
    threshold: float = ENTAILMENT_THRESHOLD,
) -> TimedFact | None:
    """One new fact for the character at this node, after entailment dedup."""
    position = node.creation_index
    prefix, suffix = render_fact_prompt(
        node.event_text, record.full_name, description_at(record, position)
    )
    completion = backend.insert(prefix, suffix, max_tokens=24).texts[0]
    fact_text = first_sentence(completion.strip())
    if not fact_text:
        return None
    candidate = canonicalize_fact(fact_text, record.full_name)

    def active_facts() -> list[tuple[int, str]]:
        out = []
        for index, fact in enumerate(record.facts):
            removed = record.removed_at.get(index)
            if removed is not None and removed <= position:
                continue
            out.append((index, canonicalize_fact(fact.text, record.full_name)))
        return out

    earlier = [(None, record.portrait)] + active_facts()
    for _, text in earlier:
        if scorers.entailment(text, candidate) > threshold:
            logger.debug(
                "%s at node %s: fact %r already entailed; dropped",
                record.full_name,
                node.id,
                fact_text,
            )
            return None
    for index, text in active_facts():
        if scorers.entailment(candidate, text) > threshold:
            record.removed_at[index] = position
    fact = TimedFact(outline_position=position, text=fact_text)
    record.facts.append(fact)
    return fact
