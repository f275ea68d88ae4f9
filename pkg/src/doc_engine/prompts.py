"""Prompt rendering for every stage of the pipeline.

Layouts live in versioned template files under ``templates/`` so they can be
golden-tested and revised without touching traversal logic.  A template file
is a set of named sections::

    # <purpose>, version 1
    == section_name ==
    body with $placeholders

Outline items render as blank-line-separated blocks.  Depth 1 uses arabic
labels, depth 2 letters, depth 3 and beyond lowercase roman numerals; each
depth level past 1 adds eight spaces of indentation.  When an expansion slot
embeds the items that follow it, those items are shifted to start at the
slot's own depth, keeping their sibling indices (list positions) unchanged.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from string import Template

from .errors import ConfigError
from .story import OutlineNode, OutlineTree, Plan

TEMPLATE_VERSION = 1
RESOLUTION_SEPARATOR = "-" * 34
ROLLING_SEPARATOR = "-" * 29
DRAFT_SEPARATOR = "-" * 32

_SECTION_RE = re.compile(r"==\s*([A-Za-z0-9_.]+)\s*==")
_VERSION_RE = re.compile(r"version\s+(\d+)")


@lru_cache(maxsize=None)
def _sections(name: str) -> dict[str, str]:
    path = resources.files("doc_engine").joinpath("templates", f"{name}.txt")
    text = path.read_text(encoding="utf-8")
    sections: dict[str, str] = {}
    current: str | None = None
    buf: list[str] = []
    version: int | None = None
    for line in text.splitlines():
        match = _SECTION_RE.fullmatch(line.strip())
        if match:
            if current is not None:
                sections[current] = "\n".join(buf).strip("\n")
            current = match.group(1)
            buf = []
        elif current is None:
            if line.startswith("#"):
                found = _VERSION_RE.search(line)
                if found:
                    version = int(found.group(1))
            elif line.strip():
                raise ConfigError(f"template {name}: content before first section")
        else:
            buf.append(line)
    if current is not None:
        sections[current] = "\n".join(buf).strip("\n")
    if version != TEMPLATE_VERSION:
        raise ConfigError(
            f"template {name}: expected version {TEMPLATE_VERSION}, found {version}"
        )
    return sections


def render(template_file: str, section: str, **values: str) -> str:
    sections = _sections(template_file)
    if section not in sections:
        raise ConfigError(f"template {template_file}: no section {section!r}")
    try:
        return Template(sections[section]).substitute(**values)
    except KeyError as exc:
        raise ConfigError(
            f"template {template_file}.{section}: missing value {exc}"
        ) from None


# -- outline item labels ------------------------------------------------------

_ROMAN = (
    (1000, "m"), (900, "cm"), (500, "d"), (400, "cd"), (100, "c"), (90, "xc"),
    (50, "l"), (40, "xl"), (10, "x"), (9, "ix"), (5, "v"), (4, "iv"), (1, "i"),
)


def roman_numeral(value: int) -> str:
    if value < 1:
        raise ValueError("roman numerals start at 1")
    out = []
    for base, glyph in _ROMAN:
        while value >= base:
            out.append(glyph)
            value -= base
    return "".join(out)


def letter_label(index: int) -> str:
    # spreadsheet-style: a..z, aa, ab, ...
    if index < 0:
        raise ValueError("sibling index must be >= 0")
    out = []
    index += 1
    while index:
        index, rem = divmod(index - 1, 26)
        out.append(chr(ord("a") + rem))
    return "".join(reversed(out))


def item_label(depth: int, index: int) -> str:
    if depth <= 1:
        return f"{index + 1}."
    if depth == 2:
        return f"{letter_label(index)}."
    return f"{roman_numeral(index + 1)}."


def item_indent(depth: int) -> str:
    return " " * (8 * max(depth - 1, 0))


def item_line(depth: int, index: int, text: str, *, label_depth1: bool = True) -> str:
    indent = item_indent(depth)
    if depth == 1 and not label_depth1:
        return f"{indent}{text}"
    return f"{indent}{item_label(depth, index)} {text}"


def _sibling_index(tree: OutlineTree, node: OutlineNode) -> int:
    if node.parent is None:
        return 0
    return tree.node(node.parent).children.index(node.id)


def _portrait_lines(plan: Plan) -> list[str]:
    return [record.portrait for record in plan.inventory]


# -- expansion slot (event generation) ---------------------------------------


@dataclass(frozen=True)
class EventSlot:
    """Rendered insertion prompt for the next child of one parent."""

    parent_id: str
    slot_depth: int
    slot_index: int
    prefix: str
    suffix: str


def render_event_slot(plan: Plan, parent_id: str) -> EventSlot:
    """Prompt for generating the next child under ``parent_id``.

    The prefix walks every outline item shallower than the slot up to and
    including the parent, then the instruction line, the already-accepted
    siblings, and the bare slot label.  The suffix carries the items that
    follow the parent, depth-shifted to start at the slot's depth.
    """
    tree = plan.tree
    parent = tree.node(parent_id)
    slot_depth = tree.node(parent_id).depth + 1
    order = tree.pre_order()
    parent_pos = next(i for i, n in enumerate(order) if n.id == parent_id)

    subtree: set[str] = set()

    def mark(node_id: str) -> None:
        subtree.add(node_id)
        for child in tree.node(node_id).children:
            mark(child)

    mark(parent_id)
    after_pos = parent_pos + 1
    while after_pos < len(order) and order[after_pos].id in subtree:
        after_pos += 1

    blocks: list[str] = [
        render(
            "outline",
            "header",
            premise=plan.premise.text,
            setting=plan.setting,
            portraits="\n".join(_portrait_lines(plan)),
        )
    ]
    for node in order[:parent_pos + 1]:
        depth = node.depth
        if 1 <= depth < slot_depth:
            blocks.append(item_line(depth, _sibling_index(tree, node), node.event_text))

    instruction = (
        render("outline", "instruction_root")
        if parent_id == tree.root_id
        else render("outline", "instruction_child")
    )
    indent = item_indent(slot_depth)
    blocks.append(f"{indent}{instruction}")
    for index, child_id in enumerate(parent.children):
        child = tree.node(child_id)
        blocks.append(item_line(slot_depth, index, child.event_text))
    slot_index = len(parent.children)
    blocks.append(f"{indent}{item_label(slot_depth, slot_index)}")
    prefix = "\n\n".join(blocks)

    suffix_nodes = [
        node
        for node in order[after_pos:]
        if 1 <= node.depth < slot_depth
    ]
    if suffix_nodes:
        shift = slot_depth - suffix_nodes[0].depth
        shifted = [
            item_line(
                node.depth + shift,
                _sibling_index(tree, node),
                node.event_text,
            )
            for node in suffix_nodes
        ]
        suffix = "\n\n" + "\n\n".join(shifted)
    else:
        suffix = ""
    return EventSlot(
        parent_id=parent_id,
        slot_depth=slot_depth,
        slot_index=slot_index,
        prefix=prefix,
        suffix=suffix,
    )


# -- scene location slot -------------------------------------------------------


@dataclass(frozen=True)
class SettingSlot:
    leaf_id: str
    prefix: str
    suffix: str


def render_setting_slot(plan: Plan, leaf_id: str) -> SettingSlot:
    """Prompt for the scene location of one leaf.

    The whole outline is laid out (depth-1 items unlabeled here), with every
    previously located leaf carrying its scene sentence and the target leaf
    ending mid-sentence at the location marker.
    """
    tree = plan.tree
    marker = render("outline", "scene_marker")
    header = render(
        "outline",
        "setting_header",
        premise=plan.premise.text,
        setting=plan.setting,
        portraits="\n\n".join(_portrait_lines(plan)),
    )
    before: list[str] = [header]
    after: list[str] = []
    seen_target = False
    for node in tree.pre_order():
        depth = node.depth
        if depth < 1:
            continue
        line = item_line(
            depth, _sibling_index(tree, node), node.event_text, label_depth1=False
        )
        if not node.children and node.setting:
            line = f"{line} {marker} {node.setting}."
        if node.id == leaf_id:
            before.append(f"{line} {marker}")
            seen_target = True
        elif seen_target:
            after.append(line)
        else:
            before.append(line)
    if not seen_target:
        raise ConfigError(f"no outline node {leaf_id!r}")
    prefix = "\n\n".join(before)
    suffix = "\n\n" + "\n\n".join(after) if after else ""
    return SettingSlot(leaf_id=leaf_id, prefix=prefix, suffix=suffix)


# -- character annotation ------------------------------------------------------


def render_mention_list_prompt(event_text: str) -> str:
    return render("annotate", "mention_list", event=event_text)


def render_single_group_prompt(event_text: str, mention: str) -> str:
    return render("annotate", "single_group", event=event_text, mention=mention)


def render_resolution_prompt(
    inventory_lines: list[str],
    resolved_names: list[str],
    previous_events: list[str],
    event_text: str,
    mention: str,
    *,
    group: bool,
) -> str:
    """Name-resolution prompt: inventory, separator, context, then the question.

    ``inventory_lines`` must already be ordered least-relevant-first; the
    caller owns that ordering (and its similarity scoring).
    """
    blocks = list(inventory_lines)
    blocks.append(RESOLUTION_SEPARATOR)
    if resolved_names:
        blocks.append(
            render("annotate", "resolution_known", names=", ".join(resolved_names))
        )
    if previous_events:
        blocks.append(
            render("annotate", "resolution_previous", events=" ".join(previous_events))
        )
    blocks.append(render("annotate", "resolution_current", event=event_text))
    question = "resolution_ask_group" if group else "resolution_ask_single"
    blocks.append(render("annotate", question, mention=mention))
    return "\n\n".join(blocks)


def render_inventory_line(name: str, description: str) -> str:
    return render("annotate", "inventory_line", name=name, description=description)


def render_fact_prompt(event_text: str, name: str, description: str) -> tuple[str, str]:
    prefix = render("annotate", "fact_intro", event=event_text, name=name)
    suffix = "\n\n" + render("annotate", "fact_suffix", description=description)
    return prefix, suffix


# -- plan-level generation -------------------------------------------------------


def render_premise_prompt() -> str:
    return render("plan", "premise")


def render_setting_prompt(premise_text: str) -> str:
    return render("plan", "setting", premise=premise_text)


def render_inventory_prompt(premise_text: str, setting: str) -> str:
    return render("plan", "characters", premise=premise_text, setting=setting)


# -- drafting ----------------------------------------------------------------


def render_summarize_prompt(passage: str) -> str:
    return render("draft", "summarize", passage=passage)


def rolling_first_prompt(premise_text: str, event_text: str) -> str:
    return "\n\n".join(
        [
            render("draft", "premise", premise=premise_text),
            render("draft", "rolling_outline", event=event_text),
            render("draft", "rolling_first"),
            ROLLING_SEPARATOR,
            render("draft", "chapter_one"),
        ]
    )


def rolling_later_prompt(premise_text: str, event_text: str, story_tail: str) -> str:
    return "\n\n".join(
        [
            render("draft", "premise", premise=premise_text),
            render("draft", "rolling_outline", event=event_text),
            render("draft", "rolling_later"),
            ROLLING_SEPARATOR,
            story_tail,
        ]
    )
