"""Run lifecycle: config handling, stage ladder, checkpoints, resume,
interactive edits, error mapping, and the rolling baseline driver."""

from __future__ import annotations

import json
import shutil
from dataclasses import replace

import pytest

from doc_engine.drafter import DraftConfig
from doc_engine.errors import (
    BudgetError,
    ConfigError,
    StageError,
    TransportError,
    ValidationError,
)
from doc_engine.outliner import OutlinerConfig
from doc_engine.pipeline import (
    CHECKPOINT_FILE,
    EXIT_BUDGET,
    EXIT_CONFIG,
    EXIT_STAGE,
    EXIT_TRANSPORT,
    OutlineEdit,
    PipelineConfig,
    PipelineRun,
    annotate_plan,
    apply_outline_edits,
    config_from_dict,
    config_to_dict,
    exit_code_for,
    export_story,
    generate_premise,
    generate_setting,
    load_checkpoint,
    load_config_file,
    new_run_state,
    resume_run,
    run_generate,
    run_rolling_baseline,
    start_run,
)
from doc_engine.scorers.mock import MockScorerSuite
from doc_engine.story import Passage, Premise, RunState, Stage, leaves_in_order

from support import (
    FIXTURE_PREMISE,
    ScriptedBackend,
    build_fixture_plan,
    fixture_state_with_first_passage,
)

TEN_WORDS = "Only ten words will never be enough for a premise."
THIRTY_WORDS = (
    "A lighthouse keeper finds a sealed rowboat washed ashore with a sleeping "
    "stranger inside, and every lamp in town burns green until she decides "
    "whether to wake him."
)


def fast_config(tmp_path, **overrides):
    base = dict(
        outliner=OutlinerConfig(max_depth=2),
        draft=replace(DraftConfig(), substep_tokens=16, max_substeps=2,
                      candidates_per_substep=2),
        seed=5,
        output_dir=str(tmp_path / "run"),
    )
    base.update(overrides)
    return PipelineConfig(**base)


class TestConfig:
    def test_round_trip(self, tmp_path):
        config = fast_config(tmp_path)
        assert config_from_dict(config_to_dict(config)) == config

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"not_a_field": 1})
        with pytest.raises(ConfigError):
            config_from_dict({"outliner": {"bogus": 2}})

    def test_violations_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"outliner": {"max_depth": 5}})
        with pytest.raises(ConfigError):
            config_from_dict({"backend": "quantum"})

    def test_load_config_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(
            {"schema_version": 1, "seed": 9, "outliner": {"max_depth": 2}}))
        config = load_config_file(path)
        assert config.seed == 9
        assert config.outliner.max_depth == 2

    def test_load_config_file_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config_file(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_config_file(bad)


class TestExitCodes:
    def test_direct_mapping(self):
        assert exit_code_for(ConfigError("x")) == EXIT_CONFIG
        assert exit_code_for(TransportError("x", attempts=2)) == EXIT_TRANSPORT
        assert exit_code_for(BudgetError("x")) == EXIT_BUDGET
        assert exit_code_for(StageError("draft", "x")) == EXIT_STAGE
        assert exit_code_for(RuntimeError("x")) == EXIT_STAGE

    def test_cause_chain_wins(self):
        inner = TransportError("refused", attempts=3)
        wrapped = StageError("outline", "expansion failed", cause=inner)
        assert exit_code_for(wrapped) == EXIT_TRANSPORT
        budget = StageError("draft", "prompt too big",
                            cause=BudgetError("over"))
        assert exit_code_for(budget) == EXIT_BUDGET


class TestPremiseAndSetting:
    def test_premise_retries_until_in_bounds(self):
        backend = ScriptedBackend([TEN_WORDS, THIRTY_WORDS])
        premise = generate_premise(backend)
        assert premise.text == THIRTY_WORDS
        assert len(backend.requests) == 2

    def test_premise_takes_first_paragraph(self):
        backend = ScriptedBackend([f"{THIRTY_WORDS}\n\nSecond paragraph."])
        assert generate_premise(backend).text == THIRTY_WORDS

    def test_premise_exhaustion_raises(self):
        backend = ScriptedBackend([], default=TEN_WORDS)
        with pytest.raises(StageError) as err:
            generate_premise(backend)
        assert err.value.stage == "premise"
        assert len(backend.requests) == 3

    def test_setting_from_first_sentence(self):
        backend = ScriptedBackend(["a foggy harbor town. It rains often."])
        assert generate_setting(Premise(THIRTY_WORDS), backend) == \
            "The story is set in a foggy harbor town."

    def test_empty_setting_raises(self):
        backend = ScriptedBackend([""])
        with pytest.raises(StageError):
            generate_setting(Premise(THIRTY_WORDS), backend)


class TestStartRun:
    def test_supplied_premise_checkpointed(self, tmp_path):
        config = fast_config(tmp_path)
        run = start_run(config, premise_text=FIXTURE_PREMISE)
        assert run.state.stage is Stage.PREMISE_ONLY
        assert (tmp_path / "run" / CHECKPOINT_FILE).exists()
        reloaded = load_checkpoint(run.out_dir)
        assert reloaded.plan.premise.text == FIXTURE_PREMISE

    def test_short_premise_kept_with_warning(self, tmp_path, caplog):
        run = start_run(fast_config(tmp_path), premise_text=TEN_WORDS)
        assert run.state.plan.premise.text == TEN_WORDS

    def test_empty_premise_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            start_run(fast_config(tmp_path), premise_text="   ")

    def test_invalid_config_rejected(self, tmp_path):
        bad = fast_config(tmp_path, backend="quantum")
        with pytest.raises(ConfigError):
            start_run(bad, premise_text=FIXTURE_PREMISE)


class TestFullRun:
    def test_stage_ladder_and_outputs(self, tmp_path):
        config = fast_config(tmp_path)
        events = []
        state = run_generate(config, premise_text=FIXTURE_PREMISE,
                             on_event=events.append)
        assert state.stage is Stage.DONE
        out = tmp_path / "run"
        story = (out / "story.txt").read_text(encoding="utf-8")
        spans = json.loads((out / "story_spans.json").read_text())
        assert story
        assert spans["schema_version"] == 1
        drafted = [p for p in state.passages if not p.skipped]
        leaves = leaves_in_order(state.plan.tree)
        assert {p.leaf_id for p in state.passages} == {n.id for n in leaves}
        assert [s["leaf_id"] for s in spans["spans"]] == \
            [p.leaf_id for p in drafted if p.text]
        stages = [e["stage"] for e in events]
        assert stages[-1] == "Done"
        assert any(e["text_delta"] for e in events)
        final = load_checkpoint(out)
        assert final.stage is Stage.DONE

    def test_rerun_is_deterministic(self, tmp_path):
        a = run_generate(fast_config(tmp_path, output_dir=str(tmp_path / "a")),
                         premise_text=FIXTURE_PREMISE)
        b = run_generate(fast_config(tmp_path, output_dir=str(tmp_path / "b")),
                         premise_text=FIXTURE_PREMISE)
        assert (tmp_path / "a" / "story.txt").read_bytes() == \
            (tmp_path / "b" / "story.txt").read_bytes()
        assert a.stage is b.stage is Stage.DONE

    def test_shallow_max_depth_still_walks_all_stages(self, tmp_path):
        config = fast_config(tmp_path, outliner=OutlinerConfig(max_depth=1))
        run = start_run(config, premise_text=FIXTURE_PREMISE)
        seen = [run.state.stage]
        while run.state.stage is not Stage.DONE:
            seen.append(run.step())
        assert seen == [Stage.PREMISE_ONLY, Stage.DEPTH1, Stage.DEPTH2,
                        Stage.DEPTH3, Stage.DRAFTING, Stage.DONE]
        assert run.state.plan.tree.depth() == 1


class TestResume:
    def test_resume_midway_matches_uninterrupted(self, tmp_path):
        config = fast_config(tmp_path, output_dir=str(tmp_path / "full"))
        run = start_run(config, premise_text=FIXTURE_PREMISE)
        run.step()  # -> Depth1
        run.step()  # -> Depth2
        midway = tmp_path / "midway"
        shutil.copytree(run.out_dir, midway)
        run.run_to_completion()
        full_story = (tmp_path / "full" / "story.txt").read_bytes()

        resumed = resume_run(midway)
        assert resumed.state.stage is Stage.DEPTH2
        resumed.run_to_completion()
        assert (midway / "story.txt").read_bytes() == full_story

    def test_resume_without_checkpoint_fails(self, tmp_path):
        with pytest.raises(ConfigError):
            resume_run(tmp_path / "nowhere")


class TestStageErrors:
    def test_failure_persists_checkpoint_and_wraps(self, tmp_path):
        config = fast_config(tmp_path)
        state = new_run_state(config, Premise(FIXTURE_PREMISE))
        # one reply covers the setting; the inventory call runs the queue dry
        backend = ScriptedBackend(["a harbor town under fog."])
        run = PipelineRun(config, state, out_dir=tmp_path / "run",
                          backend=backend, scorers=MockScorerSuite())
        with pytest.raises(StageError) as err:
            run.step()
        assert err.value.stage == "PremiseOnly"
        assert exit_code_for(err.value) == EXIT_STAGE
        saved = load_checkpoint(tmp_path / "run")
        assert saved.plan.setting == "The story is set in a harbor town under fog."

    def test_advance_gating(self, tmp_path):
        run = start_run(fast_config(tmp_path), premise_text=FIXTURE_PREMISE)
        with pytest.raises(ValidationError):
            run.advance()  # PremiseOnly cannot advance interactively
        run.step()
        assert run.advance() is Stage.DEPTH2
        assert run.advance() is Stage.DEPTH3
        assert run.advance() is Stage.DONE
        with pytest.raises(StageError):
            run.step()


def edit_state(stage=Stage.DEPTH2):
    return RunState(plan=build_fixture_plan(), passages=[], stage=stage,
                    config={})


class TestOutlineEdits:
    def test_replace_event_resets_annotations(self):
        state = edit_state()
        warnings = apply_outline_edits(state, [
            OutlineEdit("n00005", "ReplaceEvent", "  Rosa bricks up the door.  ")])
        node = state.plan.tree.node("n00005")
        assert node.event_text == "Rosa bricks up the door."
        assert node.origin == "human"
        assert node.setting is None
        assert node.character_names is None
        assert warnings == []

    def test_insert_child_after_places_next_sibling(self):
        state = edit_state()
        apply_outline_edits(state, [
            OutlineEdit("n00005", "InsertChildAfter", "A storm hits the pier.")])
        parent = state.plan.tree.node("n00004")
        new_id = parent.children[1]
        assert parent.children == ["n00005", new_id, "n00006"]
        new_node = state.plan.tree.node(new_id)
        assert new_node.origin == "human"
        assert new_node.event_text == "A storm hits the pier."

    def test_delete_warns_about_single_child(self):
        state = edit_state()
        warnings = apply_outline_edits(state, [OutlineEdit("n00003", "Delete")])
        assert "n00002" not in warnings
        assert any("n00001" in w for w in warnings)
        assert "n00003" not in state.plan.tree.nodes

    def test_batch_is_all_or_nothing(self):
        state = edit_state()
        before = state.plan.tree.node("n00005").event_text
        with pytest.raises(ValidationError):
            apply_outline_edits(state, [
                OutlineEdit("n00005", "ReplaceEvent", "New text."),
                OutlineEdit("n00006", "Teleport"),
            ])
        assert state.plan.tree.node("n00005").event_text == before

    def test_rejections(self):
        state = edit_state()
        root = state.plan.tree.root_id
        for bad in (
            OutlineEdit(root, "InsertChildAfter", "Text."),
            OutlineEdit("n00005", "ReplaceEvent", "   "),
            OutlineEdit("n99999", "Delete"),
            OutlineEdit("n00005", "Teleport"),
        ):
            with pytest.raises(ValidationError):
                apply_outline_edits(state, [bad])

    def test_edits_blocked_outside_outline_stages(self):
        for stage in (Stage.PREMISE_ONLY, Stage.DRAFTING, Stage.DONE):
            with pytest.raises(ValidationError):
                apply_outline_edits(edit_state(stage), [
                    OutlineEdit("n00005", "ReplaceEvent", "Text.")])

    def test_human_insertions_are_expanded_next_step(self, tmp_path):
        config = fast_config(tmp_path)
        run = start_run(config, premise_text=FIXTURE_PREMISE)
        run.step()  # -> Depth1
        first = run.state.plan.tree.children_of(run.state.plan.tree.root)[0]
        apply_outline_edits(run.state, [
            OutlineEdit(first.id, "InsertChildAfter",
                        "A rival arrives with a counterfeit deed.")])
        human = [n for n in run.state.plan.tree.pre_order()
                 if n.origin == "human"][0]
        run.step()  # -> Depth2 expands depth-1 parents
        assert run.state.plan.tree.node(human.id).children \
            or run.state.plan.tree.node(human.id).leaf_reason


class TestAnnotatePlan:
    def test_annotates_in_creation_order_with_dedup(self):
        plan = build_fixture_plan(annotated=False)
        backend = ScriptedBackend([
            # four leaf locations, depth-first
            "the lobby.", "the pier.", "the hall.", "the office.",
            # per node (creation order): mention list, then one fact
            "Rosa Martin", "Rosa arrives by train.",
            "Rosa Martin", "Rosa finds a letter.",
            "Victor Hale", "Victor counts the hotel exits.",
            "Rosa Martin", "Rosa arrives by train.",   # duplicate fact, dropped
            "Rosa Martin", "Rosa promises a ballroom.",
            "Victor Hale", "Victor files a complaint.",
        ])
        annotate_plan(plan, backend, MockScorerSuite())
        tree = plan.tree
        assert tree.node("n00002").setting == "the lobby"
        assert tree.node("n00006").setting == "the office"
        assert tree.node("n00001").character_names == ["Rosa Martin"]
        assert tree.node("n00004").character_names == ["Rosa Martin"]
        rosa = plan.character("Rosa Martin")
        victor = plan.character("Victor Hale")
        assert [f.outline_position for f in rosa.facts] == [1, 2, 5]
        assert [f.outline_position for f in victor.facts] == [3, 6]

    def test_existing_annotations_skipped(self):
        plan = build_fixture_plan()  # fully annotated leaves
        plan.tree.node("n00001").character_names = []
        plan.tree.node("n00004").character_names = []
        annotate_plan(plan, ScriptedBackend([]), MockScorerSuite())
        assert plan.tree.node("n00002").character_names == ["Rosa Martin"]


class TestExportAndBaseline:
    def test_export_story_files(self, tmp_path):
        state = fixture_state_with_first_passage()
        state.passages.append(Passage("n00003", "Victor waited.", 1,
                                      [(-0.1, -0.1)]))
        output = export_story(state, tmp_path)
        assert (tmp_path / "story.txt").read_text() == output.text
        spans = json.loads((tmp_path / "story_spans.json").read_text())
        assert spans["spans"][0] == {"start": 0, "leaf_id": "n00002"}

    def test_rolling_baseline_outputs(self, tmp_path):
        config = fast_config(tmp_path)
        output = run_rolling_baseline(config, premise_text=FIXTURE_PREMISE)
        out = tmp_path / "run"
        assert (out / "story.txt").read_text(encoding="utf-8") == output.text
        checkpoint = load_checkpoint(out)
        assert checkpoint.stage is Stage.DEPTH1
        top = len(checkpoint.plan.tree.root.children)
        assert [s.leaf_id for s in output.spans] == \
            [f"item-{i}" for i in range(top)]
