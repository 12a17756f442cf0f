"""Uniform chat-completion interface.

Two implementations share the ``complete(request)`` contract: a live HTTP
client speaking the de facto JSON chat protocol, and a scripted backend that
replays canned replies keyed by (template_id, slot_digest) for deterministic
tests.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import threading
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol

import requests

from .errors import (
    AuthError,
    DuplicateScript,
    MalformedResponse,
    TransportError,
    UnscriptedRequest,
)

logger = logging.getLogger(__name__)

BACKOFF_BASE_SECONDS = 0.5
BACKOFF_FACTOR = 2.0

Role = str
Message = tuple[Role, str]

_VALID_ROLES = {"system", "user", "assistant"}


def slot_digest(template_id: str, slots: Mapping[str, str]) -> str:
    """Stable 256-bit hex digest of template id plus slot names and values.

    Slots hash in their declared (mapping) order, so the same values always
    produce the same key regardless of prompt whitespace.
    """
    h = hashlib.sha256()
    h.update(template_id.encode("utf-8"))
    for name, value in slots.items():
        h.update(b"\x00")
        h.update(name.encode("utf-8"))
        h.update(b"\x00")
        h.update(str(value).encode("utf-8"))
    return h.hexdigest()


@dataclass(frozen=True)
class ChatRequest:
    """One completion call, tagged with the template that produced it."""

    model_id: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = 2048
    template_id: str = ""
    slot_digest: str = ""

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0][0] not in ("system", "user"):
            raise ValueError("first message role must be system or user")
        for role, _ in self.messages:
            if role not in _VALID_ROLES:
                raise ValueError(f"invalid role {role!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    content: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: int = 0


@dataclass(frozen=True)
class BackendConfig:
    """Connection settings for the live backend."""

    endpoint_url: str
    auth_env_var: str = ""
    timeout_ms: int = 60_000
    max_retries: int = 3
    max_inflight: int = 4

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")


class Backend(Protocol):
    """Anything that can answer a ChatRequest."""

    def complete(self, request: ChatRequest) -> ChatResponse: ...


class ScriptedBackend:
    """Deterministic backend: a pure function of (template_id, slot_digest).

    Read-only after registration, so concurrent unsynchronized reads are safe;
    registration itself is lock-protected.
    """

    def __init__(self):
        self._scripts: dict[tuple[str, str], str] = {}
        self._lock = threading.Lock()
        self.calls = 0

    def register_script(self, template_id: str, slot_digest: str, reply: str) -> None:
        key = (template_id, slot_digest)
        with self._lock:
            existing = self._scripts.get(key)
            if existing is not None and existing != reply:
                raise DuplicateScript(
                    f"({template_id}, {slot_digest}) already registered with a different reply"
                )
            self._scripts[key] = reply

    def registered(self) -> dict[tuple[str, str], str]:
        """Snapshot of every (template_id, slot_digest) -> reply entry."""
        with self._lock:
            return dict(self._scripts)

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = (request.template_id, request.slot_digest)
        reply = self._scripts.get(key)
        if reply is None:
            raise UnscriptedRequest(request.template_id, request.slot_digest)
        self.calls += 1
        prompt_len = sum(len(content.split()) for _, content in request.messages)
        return ChatResponse(
            content=reply,
            prompt_tokens=prompt_len,
            completion_tokens=len(reply.split()),
            latency_ms=0,
        )


class LiveBackend:
    """HTTP client for the JSON chat protocol.

    POSTs {model, messages, temperature, max_tokens} and reads the reply from
    choices[0].message.content. Transient failures (timeouts, connection
    errors, 429, 5xx) are retried up to max_retries with exponential backoff
    (base 500 ms, factor 2, full jitter). At most max_inflight requests are on
    the wire at once.
    """

    def __init__(
        self,
        config: BackendConfig,
        token: str | None = None,
        sleeper: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.config = config
        self._token = token
        self._sleeper = sleeper
        self._rng = rng or random.Random()
        self._inflight = threading.BoundedSemaphore(config.max_inflight)
        self._session = requests.Session()
        self.last_attempt_retries = 0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = self._token
        if token is None and self.config.auth_env_var:
            import os

            token = os.environ.get(self.config.auth_env_var, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, request: ChatRequest) -> ChatResponse:
        body = {
            "model": request.model_id,
            "messages": [{"role": r, "content": c} for r, c in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        timeout = self.config.timeout_ms / 1000.0
        failures = 0
        last_error: Exception | None = None
        with self._inflight:
            start = time.monotonic()
            for attempt in range(self.config.max_retries + 1):
                if attempt > 0:
                    # full jitter: sleep uniformly in [0, base * factor**(attempt-1)]
                    cap = BACKOFF_BASE_SECONDS * BACKOFF_FACTOR ** (attempt - 1)
                    self._sleeper(self._rng.uniform(0.0, cap))
                try:
                    resp = self._session.post(
                        self.config.endpoint_url,
                        data=json.dumps(body),
                        headers=self._headers(),
                        timeout=timeout,
                    )
                except requests.RequestException as exc:
                    failures += 1
                    last_error = exc
                    logger.warning("transport failure on attempt %d: %s", attempt + 1, exc)
                    continue
                if resp.status_code in (401, 403):
                    raise AuthError(f"endpoint returned {resp.status_code}")
                if resp.status_code == 429 or resp.status_code >= 500:
                    failures += 1
                    last_error = TransportError(f"HTTP {resp.status_code}")
                    logger.warning(
                        "retryable HTTP %d on attempt %d", resp.status_code, attempt + 1
                    )
                    continue
                if resp.status_code != 200:
                    raise MalformedResponse(f"unexpected HTTP {resp.status_code}")
                self.last_attempt_retries = failures
                return self._parse(resp, start)
        raise TransportError(
            f"gave up after {failures} failures ({self.config.max_retries} retries)"
        ) from last_error

    def _parse(self, resp: requests.Response, start: float) -> ChatResponse:
        try:
            data = resp.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"reply body not parseable: {exc}") from exc
        if not isinstance(content, str) or not content:
            raise MalformedResponse("reply content empty or not a string")
        usage = data.get("usage", {}) if isinstance(data, dict) else {}
        return ChatResponse(
            content=content,
            prompt_tokens=int(usage.get("prompt_tokens", 0) or 0),
            completion_tokens=int(usage.get("completion_tokens", 0) or 0),
            latency_ms=int((time.monotonic() - start) * 1000),
        )


def complete(request: ChatRequest, config: BackendConfig) -> ChatResponse:
    """One-shot completion against a live endpoint described by config."""
    return LiveBackend(config).complete(request)
