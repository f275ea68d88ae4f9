"""Candidate parsing, filtering, reranking, and breadth-first expansion."""

from __future__ import annotations

import pytest

from doc_engine.backends.mock import MockBackend
from doc_engine.outliner import (
    LEAF_EMPTY_FILTER,
    LEAF_RETRY_EXHAUSTED,
    OutlinerConfig,
    Slot,
    _suffix_events,
    expand_outline,
    filter_candidates,
    generate_children,
    parse_candidate,
    rerank_candidates,
)
from doc_engine.scorers.base import ScorerKind
from doc_engine.scorers.mock import MockScorerSuite
from doc_engine.story import OutlineTree, Plan, Premise

from support import (
    EVENT_2,
    FIXTURE_PREMISE,
    FIXTURE_SETTING,
    ScriptedBackend,
    build_fixture_plan,
)

EOT = "<|endoftext|>"


def fresh_plan() -> Plan:
    return Plan(premise=Premise(FIXTURE_PREMISE), setting=FIXTURE_SETTING,
                inventory=[], tree=OutlineTree())


class TestParseCandidate:
    def test_marker_splits_and_flags(self):
        c = parse_candidate(f"The dam breaks. {EOT} trailing junk", 3, EOT)
        assert c.text == "The dam breaks."
        assert c.end_of_text is True
        assert c.index == 3

    def test_plain_completion(self):
        c = parse_candidate("  The dam breaks.  ", 0, EOT)
        assert c == parse_candidate("The dam breaks.", 0, EOT)
        assert not c.end_of_text

    def test_blank_counts_as_end_of_text(self):
        c = parse_candidate("   \n ", 1, EOT)
        assert c.text == ""
        assert c.end_of_text is True


class TestFilterCandidates:
    def setup_method(self):
        self.plan = build_fixture_plan()
        self.config = OutlinerConfig()
        self.scorers = MockScorerSuite()
        # expanding under n00001; n00004..6 sit outside the ancestor chain
        self.slot = Slot(parent_id="n00001", position=0)

    def run_filter(self, candidates):
        counter = len_counter = lambda text: len(text.split())
        return filter_candidates(candidates, self.plan.tree, self.slot,
                                 self.config, self.scorers,
                                 token_counter=counter)

    def test_surface_rules(self):
        good = "Rosa discovers the cellar door behind the desk."
        rejected = [
            "rosa discovers the cellar door.",      # lowercase start
            "Rosa discovers the cellar door",       # no terminal punctuation
            "Is Rosa at the cellar door?",          # interrogative
            "Does the door open.",                  # cue-word opener
            "Rosa finds a [hidden] door.",          # banned character
            "Rosa hides.",                          # 2 tokens, under minimum
            "Rosa " + "walks and walks " * 17 + "on.",  # over 50 tokens
        ]
        assert self.run_filter([good, *rejected]) == [good]

    def test_ancestor_chain_repeats_allowed(self):
        # echoing the slot's own parent event is not repetition
        parent_echo = self.plan.tree.node("n00001").event_text
        assert self.run_filter([parent_echo]) == [parent_echo]

    def test_non_chain_repeat_rejected(self):
        other = self.plan.tree.node("n00005").event_text
        near_copy = other.replace("promises", "promised")
        assert self.run_filter([near_copy]) == []

    def test_entailment_rejection_either_direction(self):
        # entailed by a non-chain event (content words subset of EVENT_2B)
        entailed = "Victor files a complaint."
        assert self.run_filter([entailed]) == []

    def test_order_preserved(self):
        a = "Rosa discovers the cellar door behind the desk."
        b = "The mayor sends a warning letter to the hotel."
        survivors = self.run_filter([a, "bad text", b])
        assert survivors == [a, b]

    def test_requires_some_token_counter(self):
        with pytest.raises(TypeError):
            filter_candidates(["Text here."], self.plan.tree, self.slot,
                              self.config, self.scorers)


class TestRerank:
    def test_first_slot_uses_similarity_to_parent(self):
        plan = build_fixture_plan()
        scorers = MockScorerSuite()
        parent_event = plan.tree.node("n00001").event_text
        survivors = ["Utterly unrelated words entirely.", parent_event]
        best = rerank_candidates(survivors, Slot("n00001", 0), plan, scorers)
        assert best == 1

    def test_root_slot_compares_against_premise(self):
        plan = fresh_plan()
        scorers = MockScorerSuite()
        survivors = ["Completely foreign clause.",
                     "Rosa Martin inherits the seaside hotel."]
        best = rerank_candidates(survivors, Slot(plan.tree.root_id, 0), plan,
                                 scorers)
        assert best == 1

    def test_later_slots_use_ordering_scores(self):
        plan = build_fixture_plan()
        scorers = MockScorerSuite()
        scorers.script(ScorerKind.ORDERING, [0.2, 0.9, 0.4])
        survivors = ["One thing happens.", "Another thing happens.",
                     "A third thing happens."]
        best = rerank_candidates(survivors, Slot("n00001", 2), plan, scorers)
        assert best == 1

    def test_tie_breaks_to_lowest_index(self):
        plan = build_fixture_plan()
        scorers = MockScorerSuite()
        scorers.script(ScorerKind.ORDERING, [0.5, 0.5])
        best = rerank_candidates(["First.", "Second."], Slot("n00001", 1),
                                 plan, scorers)
        assert best == 0

    def test_empty_survivors_rejected(self):
        with pytest.raises(ValueError):
            rerank_candidates([], Slot("n00001", 0), build_fixture_plan(),
                              MockScorerSuite())


class TestSuffixEvents:
    def test_following_shallower_items_only(self):
        plan = build_fixture_plan()
        assert _suffix_events(plan, "n00001") == [EVENT_2]
        assert _suffix_events(plan, "n00004") == []
        assert _suffix_events(plan, plan.tree.root_id) == []


class TestGenerateChildren:
    def make(self, replies, default=None, **overrides):
        plan = fresh_plan()
        config = OutlinerConfig(**overrides)
        backend = ScriptedBackend(replies, default=default)
        return plan, config, backend, MockScorerSuite()

    def test_grows_until_end_of_text(self):
        plan, config, backend, scorers = self.make([
            "Mara finds the silver key.",
            f"Mara opens the locked gate.{EOT}",
        ])
        children = generate_children(plan.tree.root, plan, config, backend,
                                     scorers)
        assert [c.event_text for c in children] == [
            "Mara finds the silver key.",
            "Mara opens the locked gate.",
        ]
        assert plan.tree.root.children == [c.id for c in children]
        assert plan.tree.root.leaf_reason is None

    def test_retry_ladder_raises_temperature_then_flags(self):
        plan, config, backend, scorers = self.make(
            [], default=f"Lone valid event happens here.{EOT}")
        children = generate_children(plan.tree.root, plan, config, backend,
                                     scorers)
        assert children == []
        assert plan.tree.root.leaf_reason == LEAF_RETRY_EXHAUSTED
        assert plan.tree.root.children == []
        # one insert per attempt; the ladder climbs by the configured step
        temps = [round(r.temperature, 2) for r in backend.requests]
        assert temps == [1.2, 1.3, 1.4]
        assert len(plan.tree.nodes) == 1  # rejected sets were rolled back

    def test_empty_filter_flags_leaf(self):
        plan, config, backend, scorers = self.make(
            [], default="no uppercase start so never survives.")
        generate_children(plan.tree.root, plan, config, backend, scorers)
        assert plan.tree.root.leaf_reason == LEAF_EMPTY_FILTER

    def test_max_children_cap(self):
        plan, config, backend, scorers = self.make(
            [], default=None, max_children=3, max_expansion_retries=0)
        # distinct events so the repetition filter never trips
        backend.replies = [
            "Aron maps the north road.",
            "Brin forges the iron hinge.",
            "Cale rows across the strait.",
            "Dena climbs the watch tower.",
        ]
        children = generate_children(plan.tree.root, plan, config, backend,
                                     scorers)
        # the set exceeded max_children and was rolled back entirely
        assert children == []
        assert plan.tree.root.leaf_reason == LEAF_RETRY_EXHAUSTED


class TestExpandOutline:
    def test_mock_expansion_respects_bounds(self):
        plan = fresh_plan()
        config = OutlinerConfig(max_depth=2)
        expand_outline(plan, config, MockBackend(seed=4), MockScorerSuite())
        tree = plan.tree
        assert tree.violations() == []
        assert tree.depth() <= 2
        for node in tree.pre_order():
            if node.children:
                assert 2 <= len(node.children) <= 5
            elif node.depth < 2 and node.leaf_reason is None:
                pytest.fail(f"unexpanded parent {node.id} without a reason")

    def test_breadth_first_creation_order(self):
        plan = fresh_plan()
        expand_outline(plan, OutlinerConfig(max_depth=3), MockBackend(seed=4),
                       MockScorerSuite())
        nodes = sorted(plan.tree.nodes.values(), key=lambda n: n.creation_index)
        depths = [n.depth for n in nodes]
        assert depths == sorted(depths)

    def test_to_depth_limits_expansion(self):
        plan = fresh_plan()
        config = OutlinerConfig(max_depth=3)
        expand_outline(plan, config, MockBackend(seed=4), MockScorerSuite(),
                       to_depth=1)
        assert plan.tree.depth() == 1

    def test_existing_children_and_flagged_leaves_left_alone(self):
        plan = build_fixture_plan()
        plan.tree.node("n00003").leaf_reason = LEAF_RETRY_EXHAUSTED
        before = set(plan.tree.nodes)
        backend = ScriptedBackend([])  # would raise if consulted for n00003
        config = OutlinerConfig(max_depth=2)
        expand_outline(plan, config, backend, MockScorerSuite(), to_depth=2)
        assert set(plan.tree.nodes) == before

    def test_config_violations_raise(self):
        plan = fresh_plan()
        bad = OutlinerConfig(min_children=4, max_children=2)
        with pytest.raises(ValueError):
            expand_outline(plan, bad, MockBackend(seed=0), MockScorerSuite())

    def test_seeded_determinism(self):
        def grow(seed):
            plan = fresh_plan()
            expand_outline(plan, OutlinerConfig(max_depth=2),
                           MockBackend(seed=seed), MockScorerSuite())
            return [(n.id, n.event_text) for n in plan.tree.pre_order()]

        assert grow(11) == grow(11)
        assert grow(11) != grow(12)
