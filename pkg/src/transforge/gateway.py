"""Chat backends: one HTTP client and one scripted stand-in.

Both speak the same tiny contract: complete(ChatRequest) -> ChatResponse.
The HTTP backend posts an OpenAI-compatible chat body and reads the first
choice. Retries apply to transport failures only; once any well-formed HTTP
response arrives, it is terminal, which keeps request counts deterministic.

The scripted backend replays canned responses chosen by ordered matcher
rules (substring or turn index, first match wins) and is the workhorse for
tests, demos, and benchmark fixtures.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from .errors import (
    ConfigError,
    GatewayTimeoutError,
    ProtocolError,
    TransportError,
    ValidationError,
)

VALID_ROLES = ("system", "user", "assistant")
ENV_PREFIX = "TRANSFORGE_BACKEND"


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in VALID_ROLES:
            raise ValidationError(f"invalid message role: {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    max_tokens: int = 2048
    temperature: float = 0.2
    request_id: str = "r0"

    def __post_init__(self):
        if not self.messages:
            raise ValidationError("request must contain at least one message")
        if self.messages[0].role not in ("system", "user"):
            raise ValidationError("first message must be system or user")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValidationError("temperature must lie in [0, 2]")
        if self.max_tokens <= 0:
            raise ValidationError("max_tokens must be positive")

    def text(self) -> str:
        return "\n".join(m.content for m in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    request_id: str
    model_id: str
    content: str
    finish_reason: str = "stop"
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: float = 0.0


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 2
    backoff_base: float = 0.25
    factor: float = 2.0

    def delays(self):
        for attempt in range(self.max_retries):
            yield self.backoff_base * (self.factor ** attempt)


# =========================================================================
# HTTP backend
# =========================================================================


class HttpBackend:
    """POSTs chat-completion requests to one endpoint URL."""

    def __init__(
        self,
        url: str,
        *,
        api_key: str | None = None,
        timeout: float = 30.0,
        retry: RetryPolicy | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not url:
            raise ConfigError("backend url must be non-empty")
        self.url = url
        self.timeout = timeout
        self.retry = retry or RetryPolicy()
        self._sleep = sleep
        headers = {}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(
            timeout=timeout, headers=headers, transport=transport
        )

    def complete(self, request: ChatRequest) -> ChatResponse:
        body = {
            "model": request.model_id,
            "messages": [
                {"role": m.role, "content": m.content} for m in request.messages
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        delays = list(self.retry.delays()) + [None]
        started = time.monotonic()
        last_exc: Exception | None = None
        for delay in delays:
            try:
                response = self._client.post(self.url, json=body)
            except httpx.TimeoutException as exc:
                last_exc = exc
            except httpx.TransportError as exc:
                last_exc = exc
            else:
                return self._parse(request, response, started)
            if delay is not None:
                self._sleep(delay)
        if isinstance(last_exc, httpx.TimeoutException):
            raise GatewayTimeoutError(
                f"request {request.request_id} timed out after "
                f"{self.retry.max_retries + 1} tries"
            ) from last_exc
        raise TransportError(
            f"request {request.request_id} failed after "
            f"{self.retry.max_retries + 1} tries: {last_exc}"
        ) from last_exc

    def _parse(
        self, request: ChatRequest, response: httpx.Response, started: float
    ) -> ChatResponse:
        latency_ms = (time.monotonic() - started) * 1000.0
        if response.status_code != 200:
            raise ProtocolError(
                f"backend answered HTTP {response.status_code}: "
                f"{response.text[:200]}"
            )
        try:
            doc = response.json()
            choice = doc["choices"][0]
            content = choice["message"]["content"]
            finish = choice.get("finish_reason", "stop")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed completion body: {exc}") from exc
        usage = doc.get("usage", {}) if isinstance(doc, dict) else {}
        return ChatResponse(
            request_id=request.request_id,
            model_id=request.model_id,
            content=content,
            finish_reason=finish,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            latency_ms=latency_ms,
        )

    def close(self):
        self._client.close()


def env_key(backend_ref: str, suffix: str) -> str:
    ref = re.sub(r"[^A-Za-z0-9]", "_", backend_ref).upper()
    return f"{ENV_PREFIX}_{ref}_{suffix}"


def http_backend_for_ref(
    backend_ref: str, settings: dict | None = None
) -> HttpBackend:
    """Build an HTTP backend for a backend_ref.

    Explicit settings win; environment variables fill the gaps
    (TRANSFORGE_BACKEND_<REF>_URL, _API_KEY, _TIMEOUT).
    """
    settings = settings or {}
    url = settings.get("url") or os.environ.get(env_key(backend_ref, "URL"))
    if not url:
        raise ConfigError(
            f"no endpoint URL for backend {backend_ref!r}; set "
            f"{env_key(backend_ref, 'URL')} or provide one in config"
        )
    api_key = settings.get("api_key") or os.environ.get(
        env_key(backend_ref, "API_KEY")
    )
    timeout = settings.get(
        "timeout", float(os.environ.get(env_key(backend_ref, "TIMEOUT"), 30.0))
    )
    return HttpBackend(url, api_key=api_key, timeout=timeout)


# =========================================================================
# Scripted backend
# =========================================================================


@dataclass(frozen=True)
class ScriptRule:
    """Either `contains` (substring of the request text) or `turn` (0-based
    index of the request within this backend instance) must be set."""

    response: str
    contains: str | None = None
    turn: int | None = None
    finish_reason: str = "stop"

    def __post_init__(self):
        if (self.contains is None) == (self.turn is None):
            raise ValidationError(
                "script rule needs exactly one of 'contains' or 'turn'"
            )

    def matches(self, request_text: str, turn: int) -> bool:
        if self.contains is not None:
            return self.contains in request_text
        return self.turn == turn


@dataclass(frozen=True)
class ScriptedScenario:
    rules: tuple[ScriptRule, ...] = ()
    default_response: str = ""
    name: str = "scenario"


def load_scenario(path: str | Path) -> ScriptedScenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return scenario_from_doc(doc, name=path.stem)


def scenario_from_doc(doc: dict, name: str = "scenario") -> ScriptedScenario:
    if not isinstance(doc, dict):
        raise ConfigError("scenario document must be a JSON object")
    rules = []
    for raw in doc.get("rules", []):
        rules.append(
            ScriptRule(
                response=raw.get("response", ""),
                contains=raw.get("contains"),
                turn=raw.get("turn"),
                finish_reason=raw.get("finish_reason", "stop"),
            )
        )
    return ScriptedScenario(
        rules=tuple(rules),
        default_response=doc.get("default_response", ""),
        name=doc.get("name", name),
    )


def _count_tokens(text: str) -> int:
    return len(text.split())


class ScriptedBackend:
    """Deterministic backend driven by a ScriptedScenario.

    Matcher evaluation is serialized per instance so turn-index rules stay
    coherent when callers share the backend across worker threads.
    """

    def __init__(self, scenario: ScriptedScenario):
        self.scenario = scenario
        self._turn = 0
        self._lock = threading.Lock()

    @property
    def turns_served(self) -> int:
        return self._turn

    def complete(self, request: ChatRequest) -> ChatResponse:
        text = request.text()
        with self._lock:
            turn = self._turn
            self._turn += 1
            chosen = self.scenario.default_response
            finish = "stop"
            for rule in self.scenario.rules:
                if rule.matches(text, turn):
                    chosen = rule.response
                    finish = rule.finish_reason
                    break
        completion = _count_tokens(chosen)
        if finish == "length":
            completion = request.max_tokens
        return ChatResponse(
            request_id=request.request_id,
            model_id=request.model_id,
            content=chosen,
            finish_reason=finish,
            prompt_tokens=_count_tokens(text),
            completion_tokens=completion,
            latency_ms=0.0,
        )


# =========================================================================
# Bound handle: one model on one backend, with deterministic request ids
# =========================================================================


@dataclass
class BoundModel:
    """Convenience wrapper used by pipeline and agents.

    Allocates request ids from a shared counter (so a whole task has one
    gapless id sequence) and mirrors every exchange through on_exchange.
    """

    backend: Backend
    model_id: str
    temperature: float = 0.2
    max_tokens: int = 2048
    id_prefix: str = "r"
    on_exchange: Callable[[ChatRequest, ChatResponse], None] | None = None
    _counter: list = field(default_factory=lambda: [0])

    def share_counter_with(self, other: "BoundModel") -> None:
        self._counter = other._counter

    def ask(self, system: str, user: str) -> ChatResponse:
        n = self._counter[0]
        self._counter[0] += 1
        request = ChatRequest(
            model_id=self.model_id,
            messages=(
                ChatMessage(role="system", content=system),
                ChatMessage(role="user", content=user),
            ),
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            request_id=f"{self.id_prefix}{n:03d}",
        )
        return self.complete(request)

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.backend.complete(request)
        if self.on_exchange is not None:
            self.on_exchange(request, response)
        return response

    def next_request_id(self) -> str:
        n = self._counter[0]
        self._counter[0] += 1
        return f"{self.id_prefix}{n:03d}"

    def send(self, messages: Sequence[ChatMessage]) -> ChatResponse:
        request = ChatRequest(
            model_id=self.model_id,
            messages=tuple(messages),
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            request_id=self.next_request_id(),
        )
        return self.complete(request)
