"""Chat-completion backends: hosted HTTP, scripted, recording and replay."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from collections import defaultdict, deque
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

import httpx

from .profiles import ChatRequest

log = logging.getLogger(__name__)


class BackendError(RuntimeError):
    retryable = False


class TransportError(BackendError):
    retryable = True


class AuthenticationError(BackendError):
    pass


class ContextLengthError(BackendError):
    pass


class ScriptExhausted(BackendError):
    pass


@dataclass(frozen=True)
class CallContext:
    """Call metadata: which role profile, which dialogue, which turn and attempt."""

    profile: str
    dialogue_key: str = ""
    turn_index: int = 0
    attempt: int = 1


@dataclass(frozen=True)
class Completion:
    text: str
    usage: dict = field(default_factory=dict)


class Backend(Protocol):
    def complete(self, request: ChatRequest, context: CallContext) -> Completion: ...


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 3
    base_delay: float = 1.0
    max_delay: float = 30.0

    def delay(self, attempt: int) -> float:
        return min(self.max_delay, self.base_delay * 2 ** attempt)


def chat_complete(backend: Backend, request: ChatRequest, context: CallContext | None = None,
                  *, retry: RetryPolicy = RetryPolicy(),
                  sleep: Callable[[float], None] = time.sleep) -> Completion:
    """Send one request, retrying only transport-level failures."""
    context = context or CallContext(profile="")
    attempt = 0
    while True:
        try:
            return backend.complete(request, context)
        except BackendError as exc:
            if not exc.retryable or attempt >= retry.max_retries:
                raise
            wait = retry.delay(attempt)
            log.warning("transient backend error (%s); retry %d in %.1fs", exc, attempt + 1, wait)
            sleep(wait)
            attempt += 1


class HostedBackend:
    """Any endpoint speaking the JSON chat-completions protocol."""

    def __init__(self, endpoint: str, token_env: str | None = None, *, timeout: float = 120.0,
                 client: httpx.Client | None = None, name: str = "hosted"):
        url = endpoint.rstrip("/")
        if not url.endswith("/chat/completions"):
            url += "/chat/completions"
        self.url = url
        self.token_env = token_env
        self.name = name
        self._client = client or httpx.Client(timeout=timeout)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.token_env:
            token = os.environ.get(self.token_env)
            if not token:
                raise AuthenticationError(f"environment variable {self.token_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, request: ChatRequest, context: CallContext) -> Completion:
        try:
            resp = self._client.post(self.url, json=request.wire(), headers=self._headers())
        except (httpx.TransportError, httpx.TimeoutException) as exc:
            raise TransportError(f"{self.name}: {exc}") from exc
        status = resp.status_code
        if status in (401, 403):
            raise AuthenticationError(f"{self.name}: HTTP {status}")
        if status in (408, 409, 429) or status >= 500:
            raise TransportError(f"{self.name}: HTTP {status}")
        if status >= 400:
            body = resp.text
            if "context" in body.lower() and "length" in body.lower():
                raise ContextLengthError(f"{self.name}: {body[:200]}")
            raise BackendError(f"{self.name}: HTTP {status}: {body[:200]}")
        data = resp.json()
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"{self.name}: malformed response body") from exc
        return Completion(text=text, usage=data.get("usage") or {})


@dataclass
class ScriptRule:
    """Responds to requests matching ``profile``/``turn``/``model``/``pattern``.

    ``responses`` are consumed in order, with one cursor per dialogue key;
    ``respond`` computes a reply from the request instead.
    """

    profile: str | None = None
    turn: int | None = None
    model: str | None = None
    pattern: str | None = None
    responses: Sequence[str] = ()
    repeat_last: bool = False
    respond: Callable[[ChatRequest, CallContext], str] | None = None

    def __post_init__(self):
        self._regex = re.compile(self.pattern, re.DOTALL) if self.pattern else None
        if self.respond is None and not self.responses:
            raise ValueError("a rule needs responses or a respond callable")

    def matches(self, request: ChatRequest, context: CallContext) -> bool:
        if self.profile is not None and self.profile != context.profile:
            return False
        if self.turn is not None and self.turn != context.turn_index:
            return False
        if self.model is not None and self.model != request.model:
            return False
        if self._regex is not None:
            text = "\n".join(m.content for m in request.messages)
            return self._regex.search(text) is not None
        return True

    @classmethod
    def from_dict(cls, d: dict) -> ScriptRule:
        known = {"profile", "turn", "model", "pattern", "responses", "repeat_last"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown script rule keys: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class ScriptCall:
    context: CallContext
    request: ChatRequest
    text: str


class ScriptedBackend:
    """Deterministic backend driven by ordered rules; logs every request."""

    def __init__(self, rules: Iterable[ScriptRule]):
        self.rules = list(rules)
        self.log: list[ScriptCall] = []
        self._cursors: dict[tuple[int, str], int] = defaultdict(int)
        self._lock = threading.Lock()

    @classmethod
    def from_jsonl(cls, path: str | Path) -> ScriptedBackend:
        rules = []
        for no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if line.strip():
                try:
                    rules.append(ScriptRule.from_dict(json.loads(line)))
                except (ValueError, TypeError) as exc:
                    raise ValueError(f"{path}:{no}: {exc}") from exc
        return cls(rules)

    def complete(self, request: ChatRequest, context: CallContext) -> Completion:
        for idx, rule in enumerate(self.rules):
            if not rule.matches(request, context):
                continue
            if rule.respond is not None:
                text = rule.respond(request, context)
            else:
                with self._lock:
                    key = (idx, context.dialogue_key)
                    pos = self._cursors[key]
                    if pos >= len(rule.responses) and not rule.repeat_last:
                        raise ScriptExhausted(
                            f"rule {idx} ({rule.profile}) exhausted for {context.dialogue_key!r}"
                        )
                    text = rule.responses[min(pos, len(rule.responses) - 1)]
                    self._cursors[key] = pos + 1
            with self._lock:
                self.log.append(ScriptCall(context, request, text))
            return Completion(text=text)
        raise ScriptExhausted(f"no rule matches profile {context.profile!r}")

    def calls(self, profile: str | None = None) -> list[ScriptCall]:
        with self._lock:
            return [c for c in self.log if profile is None or c.context.profile == profile]


def request_key(request: ChatRequest, context: CallContext) -> str:
    payload = json.dumps([context.profile, context.dialogue_key, request.wire()],
                         ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class RecordingBackend:
    """Wraps a backend and appends every exchange to a JSONL transcript."""

    def __init__(self, inner: Backend, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest, context: CallContext) -> Completion:
        out = self.inner.complete(request, context)
        line = json.dumps({
            "key": request_key(request, context),
            "profile": context.profile,
            "dialogue_key": context.dialogue_key,
            "model": request.model,
            "text": out.text,
            "usage": out.usage,
        }, ensure_ascii=False, separators=(",", ":"))
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        return out


class ReplayBackend:
    """Serves responses from a recorded transcript; identical requests replay in order."""

    def __init__(self, path: str | Path):
        self._by_key: dict[str, deque] = defaultdict(deque)
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                self._by_key[rec["key"]].append(Completion(rec["text"], rec.get("usage") or {}))
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest, context: CallContext) -> Completion:
        key = request_key(request, context)
        with self._lock:
            queue = self._by_key.get(key)
            if not queue:
                raise ScriptExhausted(f"no recorded response for {context.profile} call")
            return queue.popleft()


class BackendRegistry:
    """Resolves model ids to backends, with an optional catch-all."""

    def __init__(self, default: Backend | None = None):
        self.default = default
        self._by_model: dict[str, Backend] = {}

    def register(self, model: str, backend: Backend) -> None:
        self._by_model[model] = backend

    def get(self, model: str) -> Backend:
        if model in self._by_model:
            return self._by_model[model]
        if self.default is None:
            raise KeyError(f"no backend configured for model {model!r}")
        return self.default

    def resolves(self, model: str) -> bool:
        return model in self._by_model or self.default is not None

    def wrap(self, fn: Callable[[Backend], Backend]) -> BackendRegistry:
        """Apply ``fn`` to every backend once, preserving sharing."""
        seen: dict[int, Backend] = {}

        def conv(b):
            if id(b) not in seen:
                seen[id(b)] = fn(b)
            return seen[id(b)]

        out = BackendRegistry(conv(self.default) if self.default is not None else None)
        for model, b in self._by_model.items():
            out.register(model, conv(b))
        return out


class RoutedBackend:
    """A single backend that dispatches on ``request.model`` through a registry."""

    def __init__(self, registry: BackendRegistry):
        self.registry = registry

    def complete(self, request: ChatRequest, context: CallContext) -> Completion:
        return self.registry.get(request.model).complete(request, context)


def recording_registry(registry: BackendRegistry, path: str | Path) -> BackendRegistry:
    """Every call through ``registry`` appended to one transcript."""
    return BackendRegistry(default=RecordingBackend(RoutedBackend(registry), path))


def replay_registry(path: str | Path) -> BackendRegistry:
    return BackendRegistry(default=ReplayBackend(path))


def complete_text(registry: BackendRegistry, request: ChatRequest, context: CallContext,
                  retry: RetryPolicy = RetryPolicy(), sleep=time.sleep) -> str:
    return chat_complete(registry.get(request.model), request, context, retry=retry,
                         sleep=sleep).text


def as_registry(backends: Any) -> BackendRegistry:
    if isinstance(backends, BackendRegistry):
        return backends
    return BackendRegistry(default=backends)
