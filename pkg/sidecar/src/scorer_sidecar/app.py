"""HTTP service implementing the scorer wire protocol.

Routes: POST /score {kind, inputs, request_id} -> {request_id, score},
POST /score_batch {items: [...]} -> {items: [...]} in request order, and
GET /health -> {status, model_versions}.  Kinds configured as "disabled"
(or whose checkpoints fail to load) answer 501 so callers can fall back
to their local mock scorers.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass
from typing import Callable

from fastapi import FastAPI, HTTPException, Request

from . import lexical
from .config import KINDS, MAX_PREFIX_TOKENS, SidecarConfig, SidecarConfigError
from .ordering import load_model

logger = logging.getLogger(__name__)

# Field names per kind, fixed by the wire protocol.
INPUT_FIELDS: dict[str, tuple[str, str]] = {
    "entailment": ("premise", "hypothesis"),
    "similarity": ("a", "b"),
    "ordering": ("context", "sentence"),
    "relevance": ("event", "passage"),
    "coherence": ("context", "passage"),
    "controller_discriminator": ("summary", "prefix"),
}

_LEXICAL_FUNCTIONS: dict[str, Callable[[str, str], float]] = {
    "entailment": lexical.entailment_probability,
    "similarity": lexical.similarity,
    "ordering": lexical.ordering_probability,
    "relevance": lexical.relevance_logprob,
    "coherence": lexical.coherence_logprob,
    "controller_discriminator": lexical.discriminator_logprob,
}

# Model calls are serialized; the lexical fallbacks skip the lock.
_inference_lock = threading.Lock()


@dataclass
class ResolvedKind:
    version: str
    score: Callable[[str, str], float] | None  # None means disabled
    locked: bool = False

    def __call__(self, first: str, second: str) -> float:
        assert self.score is not None
        if self.locked:
            with _inference_lock:
                return self.score(first, second)
        return self.score(first, second)


def _resolve_hf(kind: str, model_id: str) -> ResolvedKind:
    """Load a transformers checkpoint; on failure serve the kind disabled."""
    try:
        from transformers import pipeline

        classifier = pipeline("text-classification", model=model_id)
    except Exception as exc:
        logger.warning(
            "kind %s: could not load checkpoint %r (%s); "
            "serving 501 so callers fall back to local mocks",
            kind, model_id, exc,
        )
        return ResolvedKind(version="disabled", score=None)

    def score(first: str, second: str) -> float:
        result = classifier({"text": first, "text_pair": second}, top_k=None)
        best = max(result, key=lambda r: r["score"])
        probability = float(best["score"])
        if kind in ("relevance", "coherence", "controller_discriminator"):
            return math.log(max(probability, 1e-6))
        return probability

    return ResolvedKind(version=model_id, score=score, locked=True)


def _resolve_artifact(kind: str, path: str) -> ResolvedKind:
    model = load_model(path)
    version = f"ordering-artifact (holdout acc {model.heldout_accuracy:.3f})"
    return ResolvedKind(
        version=version, score=model.probability_in_order, locked=True
    )


def resolve_models(config: SidecarConfig) -> dict[str, ResolvedKind]:
    resolved: dict[str, ResolvedKind] = {}
    for kind in KINDS:
        spec = config.models[kind]
        if spec == "disabled":
            resolved[kind] = ResolvedKind(version="disabled", score=None)
        elif spec == "lexical":
            resolved[kind] = ResolvedKind(
                version="lexical-1", score=_LEXICAL_FUNCTIONS[kind]
            )
        elif spec.startswith("hf:"):
            resolved[kind] = _resolve_hf(kind, spec[len("hf:"):])
        elif spec.startswith("artifact:"):
            try:
                resolved[kind] = _resolve_artifact(kind, spec[len("artifact:"):])
            except (OSError, ValueError) as exc:
                raise SidecarConfigError(
                    f"{kind}: cannot load artifact {spec!r}: {exc}"
                ) from exc
        else:  # pragma: no cover - rejected by SidecarConfig already
            raise SidecarConfigError(f"{kind}: unrecognized spec {spec!r}")
    return resolved


def _validated_inputs(item: dict, index: str) -> tuple[str, str, str, str]:
    """Check one score request; returns (kind, request_id, first, second)."""
    if not isinstance(item, dict):
        raise HTTPException(400, f"{index}: request item must be an object")
    kind = item.get("kind")
    if kind not in INPUT_FIELDS:
        raise HTTPException(400, f"{index}: unknown scorer kind {kind!r}")
    request_id = item.get("request_id")
    if not isinstance(request_id, str) or not request_id:
        raise HTTPException(400, f"{index}: request_id must be a non-empty string")
    inputs = item.get("inputs")
    if not isinstance(inputs, dict):
        raise HTTPException(400, f"{index}: inputs must be an object")
    key_a, key_b = INPUT_FIELDS[kind]
    if set(inputs) != {key_a, key_b}:
        raise HTTPException(
            400,
            f"{index}: {kind} inputs must be exactly "
            f"[{key_a!r}, {key_b!r}], got {sorted(inputs)}",
        )
    first, second = inputs[key_a], inputs[key_b]
    if not isinstance(first, str) or not isinstance(second, str):
        raise HTTPException(400, f"{index}: input fields must be strings")
    if kind == "controller_discriminator":
        # Mirrors the decoder's 1024-token context window.
        if len(second.split()) > MAX_PREFIX_TOKENS:
            raise HTTPException(
                400,
                f"{index}: prefix exceeds {MAX_PREFIX_TOKENS} tokens",
            )
    return kind, request_id, first, second


def create_app(config: SidecarConfig | None = None) -> FastAPI:
    config = config or SidecarConfig()
    models = resolve_models(config)
    app = FastAPI(title="doc-scorer-sidecar")

    def score_item(item: dict, index: str = "/score") -> dict:
        kind, request_id, first, second = _validated_inputs(item, index)
        resolved = models[kind]
        if resolved.score is None:
            raise HTTPException(501, f"scorer kind {kind} is disabled")
        return {"request_id": request_id, "score": resolved(first, second)}

    async def read_json(request: Request) -> object:
        try:
            return await request.json()
        except json.JSONDecodeError as exc:
            raise HTTPException(400, "request body is not valid JSON") from exc

    @app.post("/score")
    async def score(request: Request) -> dict:
        item = await read_json(request)
        return score_item(item)

    @app.post("/score_batch")
    async def score_batch(request: Request) -> dict:
        body = await read_json(request)
        items = body.get("items") if isinstance(body, dict) else None
        if not isinstance(items, list):
            raise HTTPException(400, "/score_batch: body must have an items list")
        if len(items) > config.max_batch_size:
            raise HTTPException(
                400,
                f"/score_batch: at most {config.max_batch_size} items per request",
            )
        return {
            "items": [
                score_item(item, f"items[{position}]")
                for position, item in enumerate(items)
            ]
        }

    @app.get("/health")
    async def health() -> dict:
        return {
            "status": "ok",
            "model_versions": {kind: models[kind].version for kind in KINDS},
        }

    return app
