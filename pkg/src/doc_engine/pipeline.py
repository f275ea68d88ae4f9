"""Staged orchestration: premise, plan, outline expansion, annotation,
drafting.  Every stage boundary and every drafted leaf lands in an atomic
JSON checkpoint, so an interrupted run resumes without redoing work.

Exit codes for the CLI live here too, next to the errors they map to:
0 success, 2 config error, 3 backend transport, 4 budget error, 5 stage
error.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .backends.base import LMBackend
from .backends.http import HttpBackend
from .backends.mock import MockBackend
from .drafter import (
    DraftConfig,
    StoryOutput,
    compose_story,
    draft_leaf,
    rolling_window_baseline,
)
from .entities import (
    build_character_inventory,
    detect_characters,
    detect_settings,
    infer_character_fact,
)
from .errors import (
    BudgetError,
    ConfigError,
    StageError,
    TransportError,
    ValidationError,
)
from .outliner import OutlinerConfig, expand_outline
from .prompts import render_premise_prompt, render_setting_prompt
from .scorers.base import ScorerSuite
from .scorers.mock import MockScorerSuite
from .scorers.remote import RemoteScorerSuite
from .story import (
    OutlineTree,
    Plan,
    Premise,
    RunState,
    Stage,
    leaves_in_order,
    stage_index,
    state_from_json,
    state_to_json,
    validate_plan,
)
from .textops import first_sentence, word_count

logger = logging.getLogger(__name__)

# premise length bounds: 30-60 words nominal, +/-20% slack
PREMISE_WORD_MIN = 24
PREMISE_WORD_MAX = 72
PREMISE_ATTEMPTS = 3
SETTING_PREFIX = "The story is set in "

CHECKPOINT_FILE = "run_state.json"
STORY_FILE = "story.txt"
SPANS_FILE = "story_spans.json"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRANSPORT = 3
EXIT_BUDGET = 4
EXIT_STAGE = 5

_STAGE_FOR_DEPTH = {1: Stage.DEPTH1, 2: Stage.DEPTH2, 3: Stage.DEPTH3}

# progress event payload: {"stage": ..., "leaf_id": ..., "substep": ..., "text_delta": ...}
EventSink = Callable[[dict], None]


@dataclass(frozen=True)
class PipelineConfig:
    backend: str = "mock"  # "mock" | "http"
    scorers: str = "mock"  # "mock" | "remote"
    outliner: OutlinerConfig = field(default_factory=OutlinerConfig)
    draft: DraftConfig = field(default_factory=DraftConfig)
    seed: int = 0
    output_dir: str = "run"
    interactive: bool = False

    def violations(self) -> list[str]:
        out = []
        if self.backend not in ("mock", "http"):
            out.append(f"backend must be 'mock' or 'http', not {self.backend!r}")
        if self.scorers not in ("mock", "remote"):
            out.append(f"scorers must be 'mock' or 'remote', not {self.scorers!r}")
        if not 1 <= self.outliner.max_depth <= 3:
            out.append("max_depth must be between 1 and 3")
        if not self.output_dir:
            out.append("output_dir must be set")
        out.extend(self.outliner.violations())
        out.extend(self.draft.violations())
        return out


def config_to_dict(config: PipelineConfig) -> dict:
    return dataclasses.asdict(config)


def config_from_dict(data: dict[str, Any]) -> PipelineConfig:
    """Build a config from a plain dict, rejecting unknown keys."""
    data = dict(data)
    try:
        outliner = OutlinerConfig(**data.pop("outliner", {}))
        draft = DraftConfig(**data.pop("draft", {}))
        config = PipelineConfig(outliner=outliner, draft=draft, **data)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    problems = config.violations()
    if problems:
        raise ConfigError("; ".join(problems))
    return config


def load_config_file(path: str | Path) -> PipelineConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    data.pop("schema_version", None)
    return config_from_dict(data)


def make_backend(config: PipelineConfig) -> LMBackend:
    if config.backend == "mock":
        return MockBackend(seed=config.seed)
    return HttpBackend()


def make_scorers(config: PipelineConfig) -> ScorerSuite:
    if config.scorers == "mock":
        return MockScorerSuite()
    return RemoteScorerSuite()


def exit_code_for(error: BaseException) -> int:
    seen: list[BaseException] = []
    cursor: BaseException | None = error
    while cursor is not None and cursor not in seen:
        seen.append(cursor)
        cursor = getattr(cursor, "cause", None) or cursor.__cause__
    for e in seen:
        if isinstance(e, ConfigError):
            return EXIT_CONFIG
        if isinstance(e, TransportError):
            return EXIT_TRANSPORT
        if isinstance(e, BudgetError):
            return EXIT_BUDGET
    return EXIT_STAGE


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(state: RunState, out_dir: str | Path) -> Path:
    """Write-then-rename so a crash never leaves a torn checkpoint."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / CHECKPOINT_FILE
    tmp = out_dir / (CHECKPOINT_FILE + ".tmp")
    tmp.write_text(state_to_json(state), encoding="utf-8")
    os.replace(tmp, path)
    return path


def load_checkpoint(out_dir: str | Path) -> RunState:
    path = Path(out_dir) / CHECKPOINT_FILE
    if not path.exists():
        raise ConfigError(f"no checkpoint at {path}")
    return state_from_json(path.read_text(encoding="utf-8"))


def export_story(state: RunState, out_dir: str | Path) -> StoryOutput:
    """story.txt plus a JSON sidecar mapping character offsets to leaves."""
    out_dir = Path(out_dir)
    output = compose_story(state)
    (out_dir / STORY_FILE).write_text(output.text, encoding="utf-8")
    sidecar = {
        "schema_version": 1,
        "spans": [{"start": s.start, "leaf_id": s.leaf_id} for s in output.spans],
    }
    (out_dir / SPANS_FILE).write_text(
        json.dumps(sidecar, indent=2) + "\n", encoding="utf-8"
    )
    return output


# -- individual stages -----------------------------------------------------------


def generate_premise(backend: LMBackend) -> Premise:
    """One premise within the word bounds, retried a few times."""
    last = ""
    for attempt in range(PREMISE_ATTEMPTS):
        completion = backend.complete_one(
            render_premise_prompt(), max_tokens=160, temperature=1.0
        )
        last = completion.strip().split("\n\n")[0].strip()
        count = word_count(last)
        if PREMISE_WORD_MIN <= count <= PREMISE_WORD_MAX:
            return Premise(text=last)
        logger.warning(
            "premise attempt %d: %d words outside [%d, %d]",
            attempt + 1,
            count,
            PREMISE_WORD_MIN,
            PREMISE_WORD_MAX,
        )
    raise StageError(
        "premise",
        f"no premise within {PREMISE_WORD_MIN}-{PREMISE_WORD_MAX} words "
        f"after {PREMISE_ATTEMPTS} attempts (last had {word_count(last)})",
    )


def generate_setting(premise: Premise, backend: LMBackend) -> str:
    completion = backend.complete_one(
        render_setting_prompt(premise.text), max_tokens=48
    )
    tail = first_sentence(completion.strip()).strip().rstrip(".")
    if not tail:
        raise StageError("setting", "backend returned an empty setting")
    return f"{SETTING_PREFIX}{tail}."


def new_run_state(config: PipelineConfig, premise: Premise) -> RunState:
    problems = premise.violations()
    if problems:
        raise ConfigError("; ".join(problems))
    plan = Plan(premise=premise, setting="", inventory=[], tree=OutlineTree())
    return RunState(
        plan=plan,
        passages=[],
        stage=Stage.PREMISE_ONLY,
        config=config_to_dict(config),
    )


def annotate_plan(
    plan: Plan, backend: LMBackend, scorers: ScorerSuite
) -> Plan:
    """Settings for every leaf, then characters and facts per node.

    Nodes already annotated (resumed runs) are left alone; facts would
    otherwise be inferred twice.
    """
    detect_settings(plan, backend)
    nodes = sorted(
        (n for n in plan.tree.pre_order() if n.depth >= 1),
        key=lambda n: n.creation_index,
    )
    for node in nodes:
        if node.character_names is not None:
            continue
        node.character_names = detect_characters(node, plan, backend, scorers)
        for name in node.character_names:
            record = plan.character(name)
            if record is not None:
                infer_character_fact(node, record, plan, backend, scorers)
    return plan


# -- the run driver ---------------------------------------------------------------


class PipelineRun:
    """Owns one run: its state, backends, output directory, and event sink.

    step() performs exactly one stage transition; run_to_completion() loops
    it.  Any failure persists the checkpoint before propagating, wrapped in
    a StageError naming the stage unless it already is one.
    """

    def __init__(
        self,
        config: PipelineConfig,
        state: RunState,
        *,
        out_dir: str | Path | None = None,
        backend: LMBackend | None = None,
        scorers: ScorerSuite | None = None,
        on_event: EventSink | None = None,
    ):
        self.config = config
        self.state = state
        self.out_dir = Path(out_dir) if out_dir is not None else Path(config.output_dir)
        self.backend = backend if backend is not None else make_backend(config)
        self.scorers = scorers if scorers is not None else make_scorers(config)
        self.on_event = on_event

    # -- plumbing --

    def checkpoint(self) -> None:
        save_checkpoint(self.state, self.out_dir)

    def _emit(self, **payload: object) -> None:
        if self.on_event is not None:
            event = {
                "stage": self.state.stage.value,
                "leaf_id": None,
                "substep": None,
                "text_delta": None,
            }
            event.update(payload)
            self.on_event(event)

    def _advance(self, stage: Stage) -> None:
        self.state.advance_to(stage)
        self.checkpoint()
        self._emit()

    # -- stage bodies --

    def _step_premise_only(self) -> None:
        plan = self.state.plan
        if not plan.setting:
            plan.setting = generate_setting(plan.premise, self.backend)
            self.checkpoint()
        if not plan.inventory:
            plan.inventory = build_character_inventory(
                plan.premise, plan.setting, self.backend
            )
            self.checkpoint()
        expand_outline(
            plan, self.config.outliner, self.backend, self.scorers, to_depth=1
        )
        self._advance(Stage.DEPTH1)

    def _step_expand(self, to_depth: int) -> None:
        if to_depth <= self.config.outliner.max_depth:
            expand_outline(
                self.state.plan,
                self.config.outliner,
                self.backend,
                self.scorers,
                to_depth=to_depth,
            )
        self._advance(_STAGE_FOR_DEPTH[to_depth])

    def _step_annotate(self) -> None:
        annotate_plan(self.state.plan, self.backend, self.scorers)
        problems = validate_plan(self.state.plan)
        if problems:
            raise ValidationError("; ".join(problems))
        self._advance(Stage.DRAFTING)

    def _step_draft(self) -> None:
        state = self.state
        drafted = {p.leaf_id for p in state.passages}
        for leaf in leaves_in_order(state.plan.tree):
            if leaf.id in drafted:
                continue

            def stream(substep: int, delta: str, leaf_id: str = leaf.id) -> None:
                self._emit(leaf_id=leaf_id, substep=substep, text_delta=delta)

            passage = draft_leaf(
                state,
                leaf,
                self.config.draft,
                self.backend,
                self.scorers,
                seed=self.config.seed,
                on_substep=stream if self.on_event else None,
            )
            state.passages.append(passage)
            self.checkpoint()
        export_story(state, self.out_dir)
        self._advance(Stage.DONE)

    # -- driving --

    def step(self) -> Stage:
        """One stage transition; returns the new stage."""
        stage = self.state.stage
        try:
            if stage is Stage.PREMISE_ONLY:
                self._step_premise_only()
            elif stage is Stage.DEPTH1:
                self._step_expand(2)
            elif stage is Stage.DEPTH2:
                self._step_expand(3)
            elif stage is Stage.DEPTH3:
                self._step_annotate()
            elif stage is Stage.DRAFTING:
                self._step_draft()
            else:
                raise StageError("done", "cannot advance past Done")
        except Exception as e:
            save_checkpoint(self.state, self.out_dir)
            logger.error("stage %s failed: %s", stage.value, e)
            if isinstance(e, StageError):
                raise
            raise StageError(stage.value, str(e), cause=e) from e
        return self.state.stage

    def run_to_completion(self) -> RunState:
        while self.state.stage is not Stage.DONE:
            self.step()
        return self.state

    def advance(self) -> Stage:
        """One interactive advance: Depth1 -> Depth2, Depth2 -> Depth3, and
        Depth3 -> annotation + drafting through Done."""
        stage = self.state.stage
        if stage in (Stage.DEPTH1, Stage.DEPTH2):
            return self.step()
        if stage is Stage.DEPTH3:
            while self.state.stage is not Stage.DONE:
                self.step()
            return self.state.stage
        raise ValidationError(f"cannot advance from stage {stage.value}")


def start_run(
    config: PipelineConfig,
    *,
    premise_text: str | None = None,
    out_dir: str | Path | None = None,
    on_event: EventSink | None = None,
) -> PipelineRun:
    """A fresh run, checkpointed at PremiseOnly with premise in hand."""
    problems = config.violations()
    if problems:
        raise ConfigError("; ".join(problems))
    backend = make_backend(config)
    scorers = make_scorers(config)
    if premise_text is not None:
        premise = Premise(text=premise_text.strip())
        problems = premise.violations()
        if problems:
            raise ConfigError("; ".join(problems))
        count = word_count(premise.text)
        if not PREMISE_WORD_MIN <= count <= PREMISE_WORD_MAX:
            logger.warning(
                "supplied premise has %d words, outside [%d, %d]; keeping it",
                count,
                PREMISE_WORD_MIN,
                PREMISE_WORD_MAX,
            )
    else:
        premise = generate_premise(backend)
    state = new_run_state(config, premise)
    run = PipelineRun(
        config,
        state,
        out_dir=out_dir,
        backend=backend,
        scorers=scorers,
        on_event=on_event,
    )
    run.checkpoint()
    return run


def resume_run(
    out_dir: str | Path, *, on_event: EventSink | None = None
) -> PipelineRun:
    """Reopen a checkpointed run with the config snapshot it was saved with."""
    state = load_checkpoint(out_dir)
    config = config_from_dict(state.config)
    return PipelineRun(config, state, out_dir=out_dir, on_event=on_event)


def run_generate(
    config: PipelineConfig,
    *,
    premise_text: str | None = None,
    out_dir: str | Path | None = None,
    on_event: EventSink | None = None,
) -> RunState:
    """The whole batch pipeline, premise through exported story."""
    run = start_run(
        config, premise_text=premise_text, out_dir=out_dir, on_event=on_event
    )
    return run.run_to_completion()


# -- outline edits -----------------------------------------------------------------

EDIT_OPS = ("ReplaceEvent", "Delete", "InsertChildAfter")
_OUTLINE_STAGES = (Stage.DEPTH1, Stage.DEPTH2, Stage.DEPTH3)


@dataclass(frozen=True)
class OutlineEdit:
    node_id: str
    op: str  # one of EDIT_OPS
    event_text: str = ""


def _apply_one(tree: OutlineTree, edit: OutlineEdit) -> None:
    if edit.op not in EDIT_OPS:
        raise ValidationError(f"unknown edit operation {edit.op!r}")
    node = tree.node(edit.node_id)  # raises on dead ids
    if edit.op == "ReplaceEvent":
        if not edit.event_text.strip():
            raise ValidationError(f"ReplaceEvent on {edit.node_id}: empty event text")
        node.event_text = edit.event_text.strip()
        node.origin = "human"
        # annotations are stale once the event changes
        node.setting = None
        node.character_names = None
    elif edit.op == "Delete":
        tree.delete_subtree(edit.node_id)
    else:  # InsertChildAfter: new sibling right after the referenced node
        if node.parent is None:
            raise ValidationError("cannot insert a sibling of the root")
        if not edit.event_text.strip():
            raise ValidationError(
                f"InsertChildAfter on {edit.node_id}: empty event text"
            )
        tree.add_child(
            node.parent,
            edit.event_text.strip(),
            after_id=edit.node_id,
            origin="human",
        )


def apply_outline_edits(
    state: RunState, edits: list[OutlineEdit]
) -> list[str]:
    """All edits or none; returns warnings for shapes a human may keep.

    The batch lands on a scratch copy first, so a bad edit anywhere leaves
    the live plan untouched.
    """
    if state.stage not in _OUTLINE_STAGES:
        raise ValidationError(
            f"edits are only allowed during outline stages, not {state.stage.value}"
        )
    scratch = copy.deepcopy(state.plan)
    for edit in edits:
        _apply_one(scratch.tree, edit)
    problems = validate_plan(scratch)
    if problems:
        raise ValidationError("; ".join(problems))
    warnings = []
    for node in scratch.tree.pre_order():
        if len(node.children) == 1:
            warning = f"node {node.id} now has a single child"
            warnings.append(warning)
            logger.warning("%s", warning)
    state.plan = scratch
    return warnings


# -- rolling-window baseline --------------------------------------------------------


def run_rolling_baseline(
    config: PipelineConfig,
    *,
    premise_text: str | None = None,
    out_dir: str | Path | None = None,
) -> StoryOutput:
    """Flat per-item generation from a depth-1 outline; no annotations."""
    problems = config.violations()
    if problems:
        raise ConfigError("; ".join(problems))
    backend = make_backend(config)
    scorers = make_scorers(config)
    out = Path(out_dir) if out_dir is not None else Path(config.output_dir)
    if premise_text is not None:
        premise = Premise(text=premise_text.strip())
    else:
        premise = generate_premise(backend)
    setting = generate_setting(premise, backend)
    inventory = build_character_inventory(premise, setting, backend)
    plan = Plan(premise=premise, setting=setting, inventory=inventory, tree=OutlineTree())
    expand_outline(plan, config.outliner, backend, scorers, to_depth=1)
    state = RunState(
        plan=plan, passages=[], stage=Stage.DEPTH1, config=config_to_dict(config)
    )
    save_checkpoint(state, out)
    events = [n.event_text for n in plan.tree.children_of(plan.tree.root)]
    output = rolling_window_baseline(premise.text, events, backend, config.draft)
    out.mkdir(parents=True, exist_ok=True)
    (out / STORY_FILE).write_text(output.text, encoding="utf-8")
    sidecar = {
        "schema_version": 1,
        "spans": [{"start": s.start, "leaf_id": s.leaf_id} for s in output.spans],
    }
    (out / SPANS_FILE).write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return output
