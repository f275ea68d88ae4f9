"""HTTP control API for interactive runs.

POST /runs            create a run (premise through the depth-1 outline)
GET  /runs/{id}       current RunState
POST /runs/{id}/edits apply an outline edit batch (all-or-nothing)
POST /runs/{id}/advance  expand one more depth, or annotate + draft
GET  /runs/{id}/events   server-sent progress events, resumable by id

Every payload carries schema_version.  Mutations are serialized per run;
independent runs proceed independently.  The event buffer is kept for the
lifetime of the process, so a client that reconnects with Last-Event-ID
replays anything it missed.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field

from .errors import ConfigError, DocEngineError, ValidationError
from .pipeline import (
    OutlineEdit,
    PipelineRun,
    apply_outline_edits,
    config_from_dict,
    start_run,
)
from .story import Stage, state_to_dict

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class RunHandle:
    """One live run plus its mutation lock and progress-event buffer."""

    def __init__(self) -> None:
        self.run: PipelineRun | None = None
        self.lock = threading.Lock()
        self.events: list[dict] = []
        self.condition = threading.Condition()

    def emit(self, event: dict) -> None:
        with self.condition:
            numbered = {"id": len(self.events), **event}
            self.events.append(numbered)
            self.condition.notify_all()

    def finished(self) -> bool:
        return self.run is not None and self.run.state.stage is Stage.DONE


class CreateRunRequest(BaseModel):
    schema_version: int = SCHEMA_VERSION
    premise: str | None = None
    config: dict = Field(default_factory=dict)


class EditPayload(BaseModel):
    node_id: str
    op: str
    event_text: str = ""


class EditBatch(BaseModel):
    schema_version: int = SCHEMA_VERSION
    edits: list[EditPayload]


def _check_version(version: int) -> None:
    if version != SCHEMA_VERSION:
        raise HTTPException(
            status_code=400,
            detail=f"unsupported schema_version {version}; this server speaks {SCHEMA_VERSION}",
        )


def create_app(base_dir: str | Path = "runs") -> FastAPI:
    app = FastAPI(title="doc-engine control API")
    base = Path(base_dir)
    registry: dict[str, RunHandle] = {}

    def handle_for(run_id: str) -> RunHandle:
        handle = registry.get(run_id)
        if handle is None or handle.run is None:
            raise HTTPException(status_code=404, detail=f"no run {run_id}")
        return handle

    @app.post("/runs")
    def create_run(request: CreateRunRequest) -> dict:
        _check_version(request.schema_version)
        run_id = f"r{uuid.uuid4().hex[:8]}"
        data = dict(request.config)
        data.setdefault("interactive", True)
        data.setdefault("output_dir", str(base / run_id))
        try:
            config = config_from_dict(data)
        except ConfigError as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        handle = RunHandle()
        try:
            run = start_run(
                config,
                premise_text=request.premise,
                out_dir=base / run_id,
                on_event=handle.emit,
            )
            handle.run = run
            with handle.lock:
                run.step()  # premise -> depth-1 outline, ready for editing
        except DocEngineError as e:
            raise HTTPException(status_code=500, detail=str(e)) from e
        registry[run_id] = handle
        return {
            "schema_version": SCHEMA_VERSION,
            "run_id": run_id,
            "stage": run.state.stage.value,
        }

    @app.get("/runs/{run_id}")
    def get_run(run_id: str) -> dict:
        handle = handle_for(run_id)
        with handle.lock:
            state = state_to_dict(handle.run.state)
        return {"schema_version": SCHEMA_VERSION, "run_id": run_id, "state": state}

    @app.post("/runs/{run_id}/edits")
    def post_edits(run_id: str, batch: EditBatch) -> dict:
        _check_version(batch.schema_version)
        handle = handle_for(run_id)
        edits = [
            OutlineEdit(node_id=e.node_id, op=e.op, event_text=e.event_text)
            for e in batch.edits
        ]
        with handle.lock:
            try:
                warnings = apply_outline_edits(handle.run.state, edits)
            except (ValidationError, ConfigError) as e:
                raise HTTPException(status_code=400, detail=str(e)) from e
            handle.run.checkpoint()
            stage = handle.run.state.stage.value
        return {
            "schema_version": SCHEMA_VERSION,
            "stage": stage,
            "applied": len(edits),
            "warnings": warnings,
        }

    @app.post("/runs/{run_id}/advance")
    def post_advance(run_id: str) -> dict:
        handle = handle_for(run_id)
        with handle.lock:
            try:
                stage = handle.run.advance()
            except ValidationError as e:
                raise HTTPException(status_code=409, detail=str(e)) from e
            except DocEngineError as e:
                raise HTTPException(status_code=500, detail=str(e)) from e
        return {"schema_version": SCHEMA_VERSION, "stage": stage.value}

    @app.get("/runs/{run_id}/events")
    def get_events(run_id: str, request: Request, last_event_id: int | None = None) -> StreamingResponse:
        handle = handle_for(run_id)
        header = request.headers.get("last-event-id")
        if last_event_id is None and header is not None:
            try:
                last_event_id = int(header)
            except ValueError:
                raise HTTPException(status_code=400, detail="Last-Event-ID must be an integer")
        start = 0 if last_event_id is None else last_event_id + 1

        def stream():
            cursor = start
            idle_rounds = 0
            while True:
                with handle.condition:
                    pending = handle.events[cursor:]
                    if not pending:
                        if handle.finished():
                            return
                        handle.condition.wait(timeout=0.2)
                        pending = handle.events[cursor:]
                if not pending:
                    idle_rounds += 1
                    if idle_rounds % 25 == 0:
                        yield ": keep-alive\n\n"
                    continue
                idle_rounds = 0
                for event in pending:
                    cursor += 1
                    payload = {
                        "schema_version": SCHEMA_VERSION,
                        "stage": event["stage"],
                        "leaf_id": event["leaf_id"],
                        "substep": event["substep"],
                        "text_delta": event["text_delta"],
                    }
                    yield f"id: {event['id']}\nevent: progress\ndata: {json.dumps(payload)}\n\n"

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app
