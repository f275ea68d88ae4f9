"""Hierarchical outline-driven story generation with guided decoding."""

from __future__ import annotations

from .controller import (
    ConstraintKind,
    ControlConstraint,
    StrengthSchedule,
    build_constraints,
    decode_passage,
    fuse_logits,
)
from .drafter import DraftConfig, StoryOutput, compose_story, draft_leaf
from .errors import (
    BudgetError,
    CapabilityError,
    ConfigError,
    DocEngineError,
    ProtocolError,
    StageError,
    TransportError,
    ValidationError,
)
from .outliner import OutlinerConfig, expand_outline
from .pipeline import (
    OutlineEdit,
    PipelineConfig,
    PipelineRun,
    apply_outline_edits,
    resume_run,
    run_generate,
    run_rolling_baseline,
    start_run,
)
from .story import (
    CharacterRecord,
    OutlineNode,
    OutlineTree,
    Passage,
    Plan,
    Premise,
    RunState,
    Stage,
    TimedFact,
    leaves_in_order,
    validate_plan,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetError",
    "CapabilityError",
    "CharacterRecord",
    "ConfigError",
    "ConstraintKind",
    "ControlConstraint",
    "DocEngineError",
    "DraftConfig",
    "OutlineEdit",
    "OutlineNode",
    "OutlineTree",
    "OutlinerConfig",
    "Passage",
    "PipelineConfig",
    "PipelineRun",
    "Plan",
    "Premise",
    "ProtocolError",
    "RunState",
    "Stage",
    "StageError",
    "StoryOutput",
    "StrengthSchedule",
    "TimedFact",
    "TransportError",
    "ValidationError",
    "apply_outline_edits",
    "build_constraints",
    "compose_story",
    "decode_passage",
    "draft_leaf",
    "expand_outline",
    "fuse_logits",
    "leaves_in_order",
    "resume_run",
    "run_generate",
    "run_rolling_baseline",
    "start_run",
    "validate_plan",
]
