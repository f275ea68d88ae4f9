"""Character inventory, detection, scene locations, and fact bookkeeping."""

from __future__ import annotations

import pytest

from doc_engine.backends.base import TokenDistribution
from doc_engine.entities import (
    MentionKind,
    build_character_inventory,
    canonicalize_fact,
    classify_single_or_group,
    description_at,
    detect_characters,
    detect_settings,
    infer_character_fact,
    is_valid_character_name,
    list_mentions,
    match_inventory_name,
)
from doc_engine.errors import StageError
from doc_engine.scorers.mock import MockScorerSuite
from doc_engine.story import CharacterRecord, Premise, TimedFact

from support import FIXTURE_PREMISE, FIXTURE_SETTING, ScriptedBackend, build_fixture_plan


class ProbeBackend(ScriptedBackend):
    """Scripted completions plus a fixed next-token distribution."""

    def __init__(self, replies=None, *, probe=None):
        super().__init__(replies)
        self.probe = probe or {"other": -1.0}

    def next_distribution(self, session, k):
        entries = {self.tokenizer.encode(piece)[0]: lp
                   for piece, lp in self.probe.items()}
        return TokenDistribution(entries=entries, k=k)


class TestNames:
    def test_valid_names(self):
        assert is_valid_character_name("Rosa Martin")
        assert is_valid_character_name("Rosa Martin Kelly Swift")
        assert is_valid_character_name("Rosa O'Hara")

    def test_invalid_names(self):
        assert not is_valid_character_name("Rosa")                      # 1 word
        assert not is_valid_character_name("Rosa Martin Kelly Swift Q")  # 5 words
        assert not is_valid_character_name("Rosa martin")               # lowercase
        assert not is_valid_character_name("Rosa M4rtin")               # digit

    def test_match_inventory_name(self):
        inventory = build_fixture_plan().inventory
        assert match_inventory_name("Rosa", inventory) == "Rosa Martin"
        assert match_inventory_name("the Hale fellow", inventory) == "Victor Hale"
        assert match_inventory_name("the clerk", inventory) is None
        assert match_inventory_name("Somebody Else", inventory) is None

    def test_match_prefers_more_shared_words(self):
        inventory = [
            CharacterRecord("Rosa Hale", "One."),
            CharacterRecord("Victor Hale", "Two."),
        ]
        assert match_inventory_name("Victor Hale", inventory) == "Victor Hale"
        # tie on one shared word goes to inventory order
        assert match_inventory_name("Hale", inventory) == "Rosa Hale"


class TestDescriptionAt:
    def make_record(self):
        record = CharacterRecord("Rosa Martin", "Portrait line.")
        record.facts = [TimedFact(2, "Fact two."), TimedFact(5, "Fact five.")]
        record.removed_at = {0: 5}  # first fact superseded at position 5
        return record

    def test_position_windows(self):
        record = self.make_record()
        assert description_at(record, 1) == "Portrait line."
        assert description_at(record, 2) == "Portrait line. Fact two."
        assert description_at(record, 4) == "Portrait line. Fact two."
        assert description_at(record, 5) == "Portrait line. Fact five."
        assert description_at(record, 9) == "Portrait line. Fact five."


class TestCanonicalizeFact:
    def test_full_name_untouched(self):
        text = "Rosa Martin keeps the letter."
        assert canonicalize_fact(text, "Rosa Martin") == text

    def test_single_name_word_expanded(self):
        assert canonicalize_fact("Rosa keeps the letter.", "Rosa Martin") == \
            "Rosa Martin keeps the letter."
        assert canonicalize_fact("The letter belongs to Martin.", "Rosa Martin") \
            == "The letter belongs to Rosa Martin."

    def test_leading_pronoun_replaced(self):
        assert canonicalize_fact("She keeps the letter.", "Rosa Martin") == \
            "Rosa Martin keeps the letter."

    def test_unrelated_text_unchanged(self):
        assert canonicalize_fact("The tide went out.", "Rosa Martin") == \
            "The tide went out."


class TestInventory:
    def test_parses_portrait_lines(self):
        backend = ScriptedBackend([
            "Rosa Martin is a careful architect.\n"
            "not a portrait line at all\n"
            "Victor Hale is a soft-spoken developer.\n"
            "Rosa Martin appears twice and is kept once."
        ])
        records = build_character_inventory(
            Premise(FIXTURE_PREMISE), FIXTURE_SETTING, backend)
        assert [r.full_name for r in records] == ["Rosa Martin", "Victor Hale"]
        assert records[0].portrait == "Rosa Martin is a careful architect."

    def test_retries_then_succeeds(self):
        backend = ScriptedBackend([
            "nothing usable here",
            "Rosa Martin is a careful architect.",
        ])
        records = build_character_inventory(
            Premise(FIXTURE_PREMISE), FIXTURE_SETTING, backend)
        assert len(records) == 1
        assert [round(r.temperature, 1) for r in backend.requests] == [1.0, 1.1]

    def test_exhausted_retries_raise(self):
        backend = ScriptedBackend([], default="never a name")
        with pytest.raises(StageError):
            build_character_inventory(
                Premise(FIXTURE_PREMISE), FIXTURE_SETTING, backend)

    def test_caps_at_ten(self):
        lines = "\n".join(f"Name Number{chr(65 + i)} waits in line." for i in range(14))
        backend = ScriptedBackend([lines])
        records = build_character_inventory(
            Premise(FIXTURE_PREMISE), FIXTURE_SETTING, backend)
        assert len(records) == 10


class TestMentions:
    def test_numbered_list_continues_while_open(self):
        backend = ScriptedBackend([
            "Rosa Martin 2. the festival committee 3.",
            " Victor Hale.",
        ])
        node = build_fixture_plan().tree.node("n00006")
        mentions = list_mentions(node, backend)
        assert mentions == ["Rosa Martin", "the festival committee",
                            "Victor Hale"]
        assert len(backend.requests) == 2

    def test_single_round_when_closed(self):
        backend = ScriptedBackend(["Rosa Martin 2. Victor Hale"])
        node = build_fixture_plan().tree.node("n00006")
        assert list_mentions(node, backend) == ["Rosa Martin", "Victor Hale"]
        assert len(backend.requests) == 1


class TestSingleGroupProbe:
    def classify(self, probe):
        backend = ProbeBackend(probe=probe)
        return classify_single_or_group("Some event.", "the clerk", backend)

    def test_single_wins(self):
        assert self.classify({"single": -0.5, "group": -2.0}) is \
            MentionKind.SINGLE_UNNAMED

    def test_group_wins(self):
        assert self.classify({"single": -3.0, "group": -1.0}) is MentionKind.GROUP

    def test_only_one_side_present(self):
        assert self.classify({"group": -1.0}) is MentionKind.GROUP
        assert self.classify({"single": -1.0}) is MentionKind.SINGLE_UNNAMED

    def test_neither_present_defaults_to_single(self):
        assert self.classify({"other": -1.0}) is MentionKind.SINGLE_UNNAMED

    def test_tie_is_single(self):
        assert self.classify({"single": -1.0, "group": -1.0}) is \
            MentionKind.SINGLE_UNNAMED


class TestDetectCharacters:
    def test_named_and_resolved_single(self):
        plan = build_fixture_plan(annotated=False)
        node = plan.tree.node("n00006")
        backend = ProbeBackend(
            ["Victor Hale 2. the inspector", "Rosa Martin"],
            probe={"single": -0.5, "group": -2.0},
        )
        names = detect_characters(node, plan, backend, MockScorerSuite())
        assert names == ["Victor Hale", "Rosa Martin"]

    def test_group_resolution_caps_at_two(self):
        plan = build_fixture_plan(annotated=False)
        node = plan.tree.node("n00006")
        backend = ProbeBackend(
            ["the partners", "Rosa Martin 2. Victor Hale 3. Rosa Martin"],
            probe={"single": -4.0, "group": -0.5},
        )
        names = detect_characters(node, plan, backend, MockScorerSuite())
        assert names == ["Rosa Martin", "Victor Hale"]

    def test_unresolved_mentions_dropped(self):
        plan = build_fixture_plan(annotated=False)
        node = plan.tree.node("n00006")
        backend = ProbeBackend(
            ["the stranger", "Unknown Person"],
            probe={"single": -0.5, "group": -2.0},
        )
        assert detect_characters(node, plan, backend, MockScorerSuite()) == []

    def test_duplicate_mentions_kept_once(self):
        plan = build_fixture_plan(annotated=False)
        node = plan.tree.node("n00006")
        backend = ProbeBackend(["Victor Hale 2. Victor"])
        names = detect_characters(node, plan, backend, MockScorerSuite())
        assert names == ["Victor Hale"]


class TestDetectSettings:
    def test_fills_empty_leaves_and_inherits(self):
        plan = build_fixture_plan(annotated=False)
        backend = ScriptedBackend([
            "the cellar. More words after.",
            "",
            "the attic under the eaves.",
            "",
        ])
        detect_settings(plan, backend)
        leaves = {n.id: n.setting for n in plan.tree.pre_order() if n.is_leaf()}
        assert leaves == {
            "n00002": "the cellar",
            "n00003": "the cellar",
            "n00005": "the attic under the eaves",
            "n00006": "the attic under the eaves",
        }

    def test_no_previous_falls_back_to_story_setting(self):
        plan = build_fixture_plan(annotated=False)
        backend = ScriptedBackend(["", "", "", ""])
        detect_settings(plan, backend)
        assert plan.tree.node("n00002").setting == "the seaside town of Graywater"
        assert plan.tree.node("n00006").setting == "the seaside town of Graywater"

    def test_already_set_leaves_skipped(self):
        plan = build_fixture_plan()  # annotated: every leaf has a setting
        backend = ScriptedBackend([])  # raises if consulted
        detect_settings(plan, backend)
        assert plan.tree.node("n00002").setting == "the hotel lobby"


class TestInferCharacterFact:
    def setup_method(self):
        self.plan = build_fixture_plan()  # Rosa has a fact at position 2
        self.record = self.plan.character("Rosa Martin")
        self.node = self.plan.tree.node("n00005")  # creation_index 5
        self.scorers = MockScorerSuite()

    def infer(self, reply):
        backend = ScriptedBackend([reply])
        return infer_character_fact(self.node, self.record, self.plan, backend,
                                    self.scorers)

    def test_new_fact_appended(self):
        fact = self.infer("Rosa promises a ballroom to the committee. Extra.")
        assert fact is not None
        assert fact.outline_position == 5
        assert fact.text == "Rosa promises a ballroom to the committee."
        assert self.record.facts[-1] is fact
        assert self.record.removed_at == {}

    def test_entailed_candidate_discarded(self):
        before = list(self.record.facts)
        assert self.infer("She keeps the letter in her coat.") is None
        assert self.record.facts == before

    def test_superseding_fact_retires_the_old_one(self):
        fact = self.infer("Rosa keeps the aunt's letter in her coat and sleeve.")
        assert fact is not None
        assert self.record.removed_at == {0: 5}
        assert description_at(self.record, 5).endswith(fact.text)
        # the old fact is still visible before the supersession point
        assert "coat." in description_at(self.record, 4)

    def test_empty_completion_yields_nothing(self):
        assert self.infer("") is None
