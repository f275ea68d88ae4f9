"""HTTP client for a scorer service speaking the sidecar wire protocol.

Endpoints: POST /score with {kind, inputs, request_id} returning
{request_id, score}; POST /score_batch for lists of the same shape; and
GET /health.  The base URL comes from the constructor or the
DOC_SCORER_BASE_URL environment variable.
"""

from __future__ import annotations

import logging
import os
import time
import uuid

import httpx

from ..errors import ConfigError, ProtocolError, TransportError
from .base import INPUT_FIELDS, ScorerKind, ScorerSuite

logger = logging.getLogger(__name__)

BASE_URL_ENV = "DOC_SCORER_BASE_URL"
DEFAULT_TIMEOUT = 30.0
MAX_ATTEMPTS = 3
BACKOFF_BASE = 0.5


def _require_number(value: object, context: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProtocolError(f"{context}: score is not a number: {value!r}")
    return float(value)


class RemoteScorerSuite(ScorerSuite):
    def __init__(
        self,
        base_url: str | None = None,
        *,
        timeout: float = DEFAULT_TIMEOUT,
        client: httpx.Client | None = None,
    ) -> None:
        base_url = base_url or os.environ.get(BASE_URL_ENV)
        if not base_url:
            raise ConfigError(
                f"no scorer URL: pass base_url or set {BASE_URL_ENV}"
            )
        self._base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> RemoteScorerSuite:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    # -- transport -----------------------------------------------------------

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self._base_url}{path}"
        last: Exception | None = None
        for attempt in range(1, MAX_ATTEMPTS + 1):
            try:
                response = self._client.post(url, json=payload)
                response.raise_for_status()
                body = response.json()
                if not isinstance(body, dict):
                    raise ProtocolError(f"{path}: response body is not an object")
                return body
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last = exc
                if attempt < MAX_ATTEMPTS:
                    delay = BACKOFF_BASE * (2 ** (attempt - 1))
                    logger.warning(
                        "scorer request %s failed (attempt %d/%d): %s",
                        path,
                        attempt,
                        MAX_ATTEMPTS,
                        exc,
                    )
                    time.sleep(delay)
            except ValueError as exc:  # invalid JSON
                raise ProtocolError(f"{path}: invalid JSON in response") from exc
        raise TransportError(
            f"scorer request {path} failed: {last}", attempts=MAX_ATTEMPTS, cause=last
        )

    # -- protocol ------------------------------------------------------------

    @staticmethod
    def _item(kind: ScorerKind, first: str, second: str) -> dict:
        key_a, key_b = INPUT_FIELDS[kind]
        return {
            "kind": kind.value,
            "inputs": {key_a: first, key_b: second},
            "request_id": uuid.uuid4().hex,
        }

    def _score_pair(self, kind: ScorerKind, first: str, second: str) -> float:
        item = self._item(kind, first, second)
        body = self._post("/score", item)
        if body.get("request_id") != item["request_id"]:
            raise ProtocolError(
                f"/score: request_id mismatch "
                f"(sent {item['request_id']}, got {body.get('request_id')!r})"
            )
        return _require_number(body.get("score"), "/score")

    def score_batch(self, items: list[tuple[ScorerKind, str, str]]) -> list[float]:
        if not items:
            return []
        payload_items = [self._item(kind, a, b) for kind, a, b in items]
        body = self._post("/score_batch", {"items": payload_items})
        results = body.get("items")
        if not isinstance(results, list) or len(results) != len(payload_items):
            raise ProtocolError("/score_batch: item count mismatch")
        by_id: dict[str, float] = {}
        for entry in results:
            if not isinstance(entry, dict):
                raise ProtocolError("/score_batch: item is not an object")
            rid = entry.get("request_id")
            if not isinstance(rid, str):
                raise ProtocolError("/score_batch: item missing request_id")
            by_id[rid] = _require_number(entry.get("score"), "/score_batch")
        scores = []
        for sent in payload_items:
            rid = sent["request_id"]
            if rid not in by_id:
                raise ProtocolError(f"/score_batch: no response for {rid}")
            scores.append(by_id[rid])
        return scores

    def discriminator_extensions(
        self, summary: str, prefix: str, extensions: list[str]
    ) -> list[float]:
        return self.score_batch(
            [
                (ScorerKind.CONTROLLER_DISCRIMINATOR, summary, prefix + ext)
                for ext in extensions
            ]
        )

    def health(self) -> dict:
        url = f"{self._base_url}/health"
        try:
            response = self._client.get(url)
            response.raise_for_status()
            body = response.json()
        except (httpx.TransportError, httpx.HTTPStatusError) as exc:
            raise TransportError(f"health check failed: {exc}", cause=exc) from exc
        except ValueError as exc:
            raise ProtocolError("/health: invalid JSON in response") from exc
        if not isinstance(body, dict) or "status" not in body:
            raise ProtocolError("/health: malformed response")
        return body
