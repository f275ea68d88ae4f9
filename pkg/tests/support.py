"""Hand-built fixtures and scripted test doubles shared across the suite.

The fixture plan is written out by hand, node by node, so tests that pin
exact bytes (prompt goldens) or exact creation indexes do not depend on any
generator.  Tree ids follow the allocator: n00001 through n00006 in the add
order below.
"""

from __future__ import annotations

from doc_engine.backends.base import LMBackend, WordTokenizer
from doc_engine.errors import CapabilityError
from doc_engine.story import (
    CharacterRecord,
    OutlineTree,
    Passage,
    Plan,
    Premise,
    RunState,
    Stage,
    TimedFact,
)

FIXTURE_PREMISE = (
    "Rosa Martin inherits a run-down seaside hotel from an aunt she never met. "
    "To keep it, she must host the town's centenary festival in six weeks, "
    "while a rival developer circles the land and the hotel keeps revealing "
    "rooms that should not exist."
)
FIXTURE_SETTING = "The story is set in the seaside town of Graywater."
ROSA_PORTRAIT = (
    "Rosa Martin is a careful architect who reads old buildings like letters."
)
VICTOR_PORTRAIT = (
    "Victor Hale is a soft-spoken developer who never makes the same offer twice."
)

EVENT_1 = "Rosa arrives in Graywater and takes the hotel keys."
EVENT_1A = "Rosa finds the aunt's letter in the lobby desk."
EVENT_1B = "Victor makes his first offer on the boardwalk."
EVENT_2 = "The festival committee tests Rosa with an impossible checklist."
EVENT_2A = "Rosa promises a ballroom that is not on the blueprints."
EVENT_2B = "Victor files a complaint about the hotel's wiring."

FIRST_PASSAGE = (
    "Rosa counted the keys twice before the door would open.\n"
    "The lobby smelled of salt and old varnish."
)


class ScriptedBackend(LMBackend):
    """Returns queued replies verbatim; fails loudly when the queue runs dry."""

    def __init__(self, replies: list[str] | None = None, default: str | None = None):
        self.tokenizer = WordTokenizer()
        self.replies = list(replies or [])
        self.default = default
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        if self.replies:
            reply = self.replies.pop(0)
        elif self.default is not None:
            reply = self.default
        else:
            raise AssertionError("scripted backend ran out of replies")
        return [reply] * request.num_candidates

    def _insert_native(self, prefix, suffix, request):
        raise CapabilityError("scripted backend has no native insertion")

    def next_distribution(self, session, k):
        raise AssertionError("scripted backend does not decode token-by-token")


def build_fixture_plan(*, annotated: bool = True) -> Plan:
    """Two top-level items, two children each; annotations optional."""
    tree = OutlineTree()
    n1 = tree.add_child(tree.root_id, EVENT_1)
    n1a = tree.add_child(n1.id, EVENT_1A)
    n1b = tree.add_child(n1.id, EVENT_1B)
    n2 = tree.add_child(tree.root_id, EVENT_2)
    n2a = tree.add_child(n2.id, EVENT_2A)
    n2b = tree.add_child(n2.id, EVENT_2B)

    rosa = CharacterRecord(full_name="Rosa Martin", portrait=ROSA_PORTRAIT)
    victor = CharacterRecord(full_name="Victor Hale", portrait=VICTOR_PORTRAIT)
    if annotated:
        rosa.facts.append(
            TimedFact(
                outline_position=2,
                text="Rosa Martin keeps the aunt's letter in her coat.",
            )
        )
        n1a.setting = "the hotel lobby"
        n1a.character_names = ["Rosa Martin"]
        n1b.setting = "the boardwalk"
        n1b.character_names = ["Rosa Martin", "Victor Hale"]
        n2a.setting = "the boardwalk"
        n2a.character_names = ["Rosa Martin"]
        n2b.setting = "the town hall"
        n2b.character_names = ["Victor Hale"]

    return Plan(
        premise=Premise(text=FIXTURE_PREMISE),
        setting=FIXTURE_SETTING,
        inventory=[rosa, victor],
        tree=tree,
    )


def fixture_state_with_first_passage() -> RunState:
    """The fixture plan mid-draft: the first leaf already has its passage."""
    plan = build_fixture_plan()
    passage = Passage(
        leaf_id="n00002",
        text=FIRST_PASSAGE,
        substeps_used=2,
        final_scores=[(-0.2, -0.1), (-0.3, -0.1)],
    )
    return RunState(plan=plan, passages=[passage], stage=Stage.DRAFTING, config={})
