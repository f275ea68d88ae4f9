"""Sidecar configuration: one model spec per scorer kind.

A spec is one of:

* ``"lexical"`` - the built-in overlap heuristics, always available.
* ``"hf:<model id>"`` - a transformers checkpoint, resolved at startup.
* ``"artifact:<path>"`` - a trained ordering-model artifact (ordering only).
* ``"disabled"`` - the kind is declared unavailable and served as 501.

Every kind must be mapped explicitly or by the default; an unknown kind or a
malformed spec is a configuration error, not a runtime surprise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

KINDS = (
    "entailment",
    "similarity",
    "ordering",
    "relevance",
    "coherence",
    "controller_discriminator",
)

_SPEC_PREFIXES = ("hf:", "artifact:")
_SPEC_LITERALS = ("lexical", "disabled")

# Mirrors the decoder's context window; longer prefixes would be truncated
# by the model anyway, so the service rejects them outright.
MAX_PREFIX_TOKENS = 1024


class SidecarConfigError(ValueError):
    """Raised for malformed or incomplete sidecar configuration."""


def _check_spec(kind: str, spec: str) -> None:
    if spec in _SPEC_LITERALS:
        return
    if any(spec.startswith(p) and len(spec) > len(p) for p in _SPEC_PREFIXES):
        if spec.startswith("artifact:") and kind != "ordering":
            raise SidecarConfigError(
                f"{kind}: artifact specs are only valid for the ordering kind"
            )
        return
    raise SidecarConfigError(f"{kind}: unrecognized model spec {spec!r}")


@dataclass
class SidecarConfig:
    """Resolved configuration with a spec for all six kinds."""

    models: dict[str, str] = field(default_factory=dict)
    port: int = 8100
    max_batch_size: int = 64

    def __post_init__(self) -> None:
        for kind in self.models:
            if kind not in KINDS:
                raise SidecarConfigError(f"unknown scorer kind {kind!r}")
        for kind in KINDS:
            self.models.setdefault(kind, "lexical")
        for kind, spec in self.models.items():
            _check_spec(kind, spec)
        if self.max_batch_size < 1:
            raise SidecarConfigError("max_batch_size must be positive")


def load_config_file(path: str | Path) -> SidecarConfig:
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    if not isinstance(data, dict):
        raise SidecarConfigError("config root must be a JSON object")
    unknown = set(data) - {"models", "port", "max_batch_size"}
    if unknown:
        raise SidecarConfigError(f"unknown config keys: {sorted(unknown)}")
    return SidecarConfig(
        models=dict(data.get("models", {})),
        port=int(data.get("port", 8100)),
        max_batch_size=int(data.get("max_batch_size", 64)),
    )
