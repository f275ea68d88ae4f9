"""Client for completion servers speaking the /v1/completions JSON protocol."""

from __future__ import annotations

import logging
import os
import time

import httpx

from ..errors import CapabilityError, ConfigError, ProtocolError, TransportError
from .base import (
    DEFAULT_CONTEXT_WINDOW,
    CompletionRequest,
    DecodingSession,
    LMBackend,
    TokenDistribution,
    WordTokenizer,
    log_normalize,
)

logger = logging.getLogger(__name__)

BASE_URL_ENV = "DOC_LM_BASE_URL"
API_KEY_ENV = "DOC_LM_API_KEY"
DEFAULT_TIMEOUT = 60.0
MAX_ATTEMPTS = 3
BACKOFF_BASE = 1.0


class HttpBackend(LMBackend):
    """LMBackend over HTTP.

    A completion that the server finished naturally (finish_reason "stop"
    with no stop sequences in play) gets the end-of-text marker appended so
    downstream end-of-list detection sees it.
    """

    def __init__(
        self,
        base_url: str | None = None,
        *,
        api_key: str | None = None,
        model: str | None = None,
        timeout: float = DEFAULT_TIMEOUT,
        context_window: int = DEFAULT_CONTEXT_WINDOW,
        client: httpx.Client | None = None,
    ) -> None:
        base_url = base_url or os.environ.get(BASE_URL_ENV)
        if not base_url:
            raise ConfigError(f"no backend URL: pass base_url or set {BASE_URL_ENV}")
        self._base_url = base_url.rstrip("/")
        self._model = model
        self.tokenizer = WordTokenizer()
        self.context_window = context_window
        headers = {}
        api_key = api_key or os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def close(self) -> None:
        self._client.close()

    # -- transport -------------------------------------------------------------

    def _post_completions(self, payload: dict) -> dict:
        url = f"{self._base_url}/v1/completions"
        last: Exception | None = None
        for attempt in range(1, MAX_ATTEMPTS + 1):
            try:
                response = self._client.post(url, json=payload)
                if response.status_code == 400 and "suffix" in payload:
                    # servers without insertion reject the suffix field
                    raise CapabilityError("backend rejected insertion request")
                if response.status_code in (429,) or response.status_code >= 500:
                    response.raise_for_status()
                response.raise_for_status()
                body = response.json()
                if not isinstance(body, dict):
                    raise ProtocolError("completion response is not an object")
                return body
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                status = getattr(getattr(exc, "response", None), "status_code", None)
                retryable = isinstance(exc, httpx.TransportError) or status in (
                    429,
                ) or (status is not None and status >= 500)
                if not retryable:
                    raise TransportError(
                        f"completion request failed: {exc}", attempts=attempt, cause=exc
                    ) from exc
                last = exc
                if attempt < MAX_ATTEMPTS:
                    delay = BACKOFF_BASE * (2 ** (attempt - 1))
                    logger.warning(
                        "completion request failed (attempt %d/%d), retrying in %.1fs: %s",
                        attempt,
                        MAX_ATTEMPTS,
                        delay,
                        exc,
                    )
                    time.sleep(delay)
            except ValueError as exc:
                raise ProtocolError("completion response is not valid JSON") from exc
        raise TransportError(
            f"completion request failed: {last}", attempts=MAX_ATTEMPTS, cause=last
        )

    def _payload(self, request: CompletionRequest) -> dict:
        payload: dict = {
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "n": request.num_candidates,
        }
        if self._model:
            payload["model"] = self._model
        if request.suffix:
            payload["suffix"] = request.suffix
        if request.stop_sequences:
            payload["stop"] = request.stop_sequences
        return payload

    def _texts(self, body: dict, request: CompletionRequest) -> list[str]:
        choices = body.get("choices")
        if not isinstance(choices, list) or len(choices) != request.num_candidates:
            raise ProtocolError(
                f"expected {request.num_candidates} choices, "
                f"got {len(choices) if isinstance(choices, list) else type(choices)}"
            )
        out = []
        for choice in choices:
            if not isinstance(choice, dict) or not isinstance(choice.get("text"), str):
                raise ProtocolError("choice without text")
            text = choice["text"]
            if (
                choice.get("finish_reason") == "stop"
                and not request.stop_sequences
                and self.eot_marker not in text
            ):
                text += self.eot_marker
            out.append(text)
        return out

    # -- LMBackend ---------------------------------------------------------------

    def complete(self, request: CompletionRequest) -> list[str]:
        problems = request.violations()
        if problems:
            raise ProtocolError("; ".join(problems))
        body = self._post_completions(self._payload(request))
        return self._texts(body, request)

    def _insert_native(
        self, prefix: str, suffix: str, request: CompletionRequest
    ) -> list[str]:
        payload = self._payload(request)
        payload["prompt"] = prefix
        payload["suffix"] = suffix
        body = self._post_completions(payload)
        return self._texts(body, request)

    def next_distribution(self, session: DecodingSession, k: int) -> TokenDistribution:
        payload: dict = {
            "prompt": session.text(),
            "max_tokens": 1,
            "temperature": 0.0,
            "logprobs": k,
        }
        if self._model:
            payload["model"] = self._model
        body = self._post_completions(payload)
        choices = body.get("choices")
        if not isinstance(choices, list) or not choices:
            raise ProtocolError("logprob request returned no choices")
        logprobs = choices[0].get("logprobs") or {}
        tops = (logprobs.get("top_logprobs") or [None])[0]
        if not isinstance(tops, dict) or not tops:
            raise ProtocolError("backend returned no top_logprobs")
        entries: dict[int, float] = {}
        temperature = max(session.temperature, 1e-6)
        for token_text, logprob in tops.items():
            ids = self.tokenizer.encode(token_text)
            if len(ids) != 1:
                logger.debug("skipping multi-piece logprob token %r", token_text)
                continue
            entries[ids[0]] = float(logprob) / temperature
        if not entries:
            raise ProtocolError("no usable tokens in top_logprobs")
        return TokenDistribution(entries=log_normalize(entries), k=k)
