"""Domain model: premises, outline trees, characters, passages, run state.

The outline is a tree whose synthetic root (depth 0, empty event text) holds
the top-level items as depth-1 children.  Node ids are content-independent
strings allocated from a per-tree counter, so interactive edits never
reindex existing nodes; creation order is tracked separately in
``creation_index``.  Character facts are never deleted: supersession is
recorded in ``CharacterRecord.removed_at`` so any historical view of a
character can be reconstructed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .errors import ValidationError

SCHEMA_VERSION = 1


class Stage(str, Enum):
    PREMISE_ONLY = "PremiseOnly"
    DEPTH1 = "Depth1"
    DEPTH2 = "Depth2"
    DEPTH3 = "Depth3"
    DRAFTING = "Drafting"
    DONE = "Done"


_STAGE_ORDER = [
    Stage.PREMISE_ONLY,
    Stage.DEPTH1,
    Stage.DEPTH2,
    Stage.DEPTH3,
    Stage.DRAFTING,
    Stage.DONE,
]


def stage_index(stage: Stage) -> int:
    return _STAGE_ORDER.index(stage)


@dataclass
class Premise:
    text: str

    def violations(self) -> list[str]:
        out = []
        if not self.text.strip():
            out.append("premise: empty")
        if "\n\n" in self.text.strip():
            out.append("premise: more than one paragraph")
        return out


@dataclass
class TimedFact:
    outline_position: int
    text: str


@dataclass
class CharacterRecord:
    full_name: str
    portrait: str
    facts: list[TimedFact] = field(default_factory=list)
    # fact index -> outline position at which that fact was superseded
    removed_at: dict[int, int] = field(default_factory=dict)


@dataclass
class OutlineNode:
    id: str
    depth: int
    event_text: str = ""
    setting: str | None = None
    # None means "not yet annotated"; [] means annotated, none detected
    character_names: list[str] | None = None
    children: list[str] = field(default_factory=list)
    parent: str | None = None
    creation_index: int = 0
    origin: str = "model"  # "model" | "human"
    # why an expandable node was accepted as a leaf, when that happened
    leaf_reason: str | None = None

    def is_leaf(self) -> bool:
        return not self.children


class OutlineTree:
    """Flat node table keyed by id, plus the root id and an id allocator."""

    def __init__(self, nodes: dict[str, OutlineNode] | None = None,
                 root_id: str | None = None, next_creation_index: int | None = None):
        if nodes is None:
            root = OutlineNode(id="n00000", depth=0, creation_index=0)
            nodes = {root.id: root}
            root_id = root.id
        if root_id is None or root_id not in nodes:
            raise ValidationError("tree: missing root node")
        self.nodes = nodes
        self.root_id = root_id
        if next_creation_index is None:
            next_creation_index = 1 + max(n.creation_index for n in nodes.values())
        self.next_creation_index = next_creation_index

    @property
    def root(self) -> OutlineNode:
        return self.nodes[self.root_id]

    def node(self, node_id: str) -> OutlineNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise ValidationError(f"node {node_id} not in tree") from None

    def children_of(self, node: OutlineNode | str) -> list[OutlineNode]:
        if isinstance(node, str):
            node = self.node(node)
        return [self.nodes[cid] for cid in node.children]

    def parent_of(self, node: OutlineNode) -> OutlineNode | None:
        return self.nodes[node.parent] if node.parent is not None else None

    def _allocate(self) -> tuple[str, int]:
        index = self.next_creation_index
        self.next_creation_index += 1
        return f"n{index:05d}", index

    def add_child(self, parent_id: str, event_text: str, *,
                  after_id: str | None = None, first: bool = False,
                  origin: str = "model") -> OutlineNode:
        parent = self.node(parent_id)
        node_id, index = self._allocate()
        node = OutlineNode(id=node_id, depth=parent.depth + 1, event_text=event_text,
                           parent=parent_id, creation_index=index, origin=origin)
        self.nodes[node_id] = node
        if first:
            parent.children.insert(0, node_id)
        elif after_id is not None:
            parent.children.insert(parent.children.index(after_id) + 1, node_id)
        else:
            parent.children.append(node_id)
        return node

    def delete_subtree(self, node_id: str) -> list[str]:
        """Remove a node and its descendants; returns the removed ids."""
        node = self.node(node_id)
        if node_id == self.root_id:
            raise ValidationError("cannot delete the root")
        removed: list[str] = []
        stack = [node_id]
        while stack:
            nid = stack.pop()
            stack.extend(self.nodes[nid].children)
            removed.append(nid)
            del self.nodes[nid]
        parent = self.nodes[node.parent]
        parent.children.remove(node_id)
        return removed

    def pre_order(self) -> list[OutlineNode]:
        out: list[OutlineNode] = []

        def walk(node: OutlineNode) -> None:
            out.append(node)
            for child in self.children_of(node):
                walk(child)

        walk(self.root)
        return out

    def depth(self) -> int:
        return max(n.depth for n in self.nodes.values())

    def ancestor_ids(self, node_id: str) -> list[str]:
        """Ids of the strict ancestors, root first."""
        chain = []
        cursor = self.node(node_id).parent
        while cursor is not None:
            chain.append(cursor)
            cursor = self.nodes[cursor].parent
        chain.reverse()
        return chain

    def violations(self) -> list[str]:
        out = []
        root = self.nodes.get(self.root_id)
        if root is None:
            return [f"tree: root {self.root_id} missing"]
        if root.parent is not None:
            out.append("root: has a parent")
        if root.event_text:
            out.append("root: non-empty event text")
        if root.depth != 0:
            out.append("root: depth != 0")
        seen_as_child: dict[str, str] = {}
        for node in self.nodes.values():
            for cid in node.children:
                child = self.nodes.get(cid)
                if child is None:
                    out.append(f"node {node.id}: missing child {cid}")
                    continue
                if cid in seen_as_child:
                    out.append(f"node {cid}: multiple parents")
                seen_as_child[cid] = node.id
                if child.parent != node.id:
                    out.append(f"node {cid}: parent pointer mismatch")
                if child.depth != node.depth + 1:
                    out.append(f"node {cid}: depth != parent depth + 1")
        for node in self.nodes.values():
            if node.id != self.root_id and node.id not in seen_as_child:
                out.append(f"node {node.id}: orphan")
        # reachability (catches cycles disconnected from the root)
        reached = {n.id for n in self.pre_order()} if not out else set()
        if not out and reached != set(self.nodes):
            out.append("tree: unreachable nodes present")
        return out


@dataclass
class Plan:
    premise: Premise
    setting: str
    inventory: list[CharacterRecord]
    tree: OutlineTree

    def character(self, full_name: str) -> CharacterRecord | None:
        for record in self.inventory:
            if record.full_name == full_name:
                return record
        return None


@dataclass
class Passage:
    leaf_id: str
    text: str
    substeps_used: int
    final_scores: list[tuple[float, float]]
    skipped: bool = False


@dataclass
class RunState:
    plan: Plan
    passages: list[Passage]
    stage: Stage
    config: dict

    def advance_to(self, stage: Stage) -> None:
        if stage_index(stage) < stage_index(self.stage):
            raise ValidationError(f"stage cannot move backward ({self.stage.value} -> {stage.value})")
        self.stage = stage


def leaves_in_order(tree: OutlineTree) -> list[OutlineNode]:
    """Leaves in depth-first pre-order; a childless root yields []."""
    structural = tree.violations()
    if structural:
        raise ValidationError("; ".join(structural))
    return [n for n in tree.pre_order() if n.is_leaf() and n.id != tree.root_id]


def ancestors_with_children(node: OutlineNode | str, tree: OutlineTree) -> list[tuple[OutlineNode, list[OutlineNode]]]:
    """(ancestor, ordered children) pairs from the root down to the node's parent."""
    node_id = node if isinstance(node, str) else node.id
    tree.node(node_id)  # raises if absent
    chain = tree.ancestor_ids(node_id)
    return [(tree.node(aid), tree.children_of(aid)) for aid in chain]


def validate_plan(plan: Plan) -> list[str]:
    out = plan.premise.violations()
    out.extend(plan.tree.violations())
    names = [r.full_name for r in plan.inventory]
    if len(names) != len(set(names)):
        out.append("inventory: duplicate full names")
    known = set(names)
    for node in plan.tree.nodes.values():
        if node.character_names is not None:
            if len(node.character_names) > 5:
                out.append(f"node {node.id}: >5 characters")
            for name in node.character_names:
                if name not in known:
                    out.append(f"node {node.id}: character {name!r} not in inventory")
    for record in plan.inventory:
        positions = [f.outline_position for f in record.facts]
        if positions != sorted(positions):
            out.append(f"character {record.full_name}: facts out of order")
        for fact in record.facts:
            if not fact.text.strip():
                out.append(f"character {record.full_name}: empty fact")
    return out


# ---------------------------------------------------------------------------
# JSON persistence


def _node_to_dict(node: OutlineNode) -> dict:
    return {
        "id": node.id,
        "depth": node.depth,
        "event_text": node.event_text,
        "setting": node.setting,
        "character_names": node.character_names,
        "children": list(node.children),
        "parent": node.parent,
        "creation_index": node.creation_index,
        "origin": node.origin,
        "leaf_reason": node.leaf_reason,
    }


def _node_from_dict(data: dict) -> OutlineNode:
    return OutlineNode(
        id=data["id"],
        depth=data["depth"],
        event_text=data.get("event_text", ""),
        setting=data.get("setting"),
        character_names=data.get("character_names"),
        children=list(data.get("children", [])),
        parent=data.get("parent"),
        creation_index=data.get("creation_index", 0),
        origin=data.get("origin", "model"),
        leaf_reason=data.get("leaf_reason"),
    )


def _record_to_dict(record: CharacterRecord) -> dict:
    return {
        "full_name": record.full_name,
        "portrait": record.portrait,
        "facts": [{"outline_position": f.outline_position, "text": f.text} for f in record.facts],
        "removed_at": {str(k): v for k, v in sorted(record.removed_at.items())},
    }


def _record_from_dict(data: dict) -> CharacterRecord:
    return CharacterRecord(
        full_name=data["full_name"],
        portrait=data.get("portrait", ""),
        facts=[TimedFact(f["outline_position"], f["text"]) for f in data.get("facts", [])],
        removed_at={int(k): v for k, v in data.get("removed_at", {}).items()},
    )


def state_to_dict(state: RunState) -> dict:
    nodes = sorted(state.plan.tree.nodes.values(), key=lambda n: n.creation_index)
    return {
        "schema_version": SCHEMA_VERSION,
        "premise": {"text": state.plan.premise.text},
        "setting": state.plan.setting,
        "inventory": [_record_to_dict(r) for r in state.plan.inventory],
        "tree": {
            "nodes": [_node_to_dict(n) for n in nodes],
            "root": state.plan.tree.root_id,
            "next_creation_index": state.plan.tree.next_creation_index,
        },
        "passages": [
            {
                "leaf_id": p.leaf_id,
                "text": p.text,
                "substeps_used": p.substeps_used,
                "final_scores": [list(pair) for pair in p.final_scores],
                "skipped": p.skipped,
            }
            for p in state.passages
        ],
        "stage": state.stage.value,
        "config": state.config,
    }


def state_from_dict(data: dict) -> RunState:
    tree_data = data["tree"]
    nodes = {d["id"]: _node_from_dict(d) for d in tree_data["nodes"]}
    tree = OutlineTree(nodes, tree_data["root"], tree_data.get("next_creation_index"))
    plan = Plan(
        premise=Premise(data["premise"]["text"]),
        setting=data.get("setting", ""),
        inventory=[_record_from_dict(r) for r in data.get("inventory", [])],
        tree=tree,
    )
    passages = [
        Passage(
            leaf_id=p["leaf_id"],
            text=p["text"],
            substeps_used=p["substeps_used"],
            final_scores=[tuple(pair) for pair in p.get("final_scores", [])],
            skipped=p.get("skipped", False),
        )
        for p in data.get("passages", [])
    ]
    return RunState(plan=plan, passages=passages, stage=Stage(data["stage"]),
                    config=data.get("config", {}))


def state_to_json(state: RunState) -> str:
    return json.dumps(state_to_dict(state), indent=2, ensure_ascii=False) + "\n"


def state_from_json(text: str) -> RunState:
    return state_from_dict(json.loads(text))
