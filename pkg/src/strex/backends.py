"""Model invocation layer: live HTTP client, scripted mock, record/replay.

All callers depend only on the `complete(request) -> ChatResponse` protocol,
so any backend can stand in for any other.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol

import httpx

from .errors import BackendUnavailable, CassetteMiss, NoRuleMatched, SinkWriteFailure


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.0
    max_tokens: int = 4096
    seed: Optional[int] = 0


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]  # (role, content)
    system: Optional[str] = None
    params: SamplingParams = SamplingParams()

    @staticmethod
    def of(prompt: str, system: Optional[str] = None) -> "ChatRequest":
        return ChatRequest(messages=(("user", prompt),), system=system)

    def text(self) -> str:
        """All message content joined; what scripted rules match against."""
        parts = [self.system] if self.system else []
        parts.extend(content for _, content in self.messages)
        return "\n".join(parts)

    def canonical(self) -> str:
        payload = {
            "system": self.system,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "params": {
                "temperature": self.params.temperature,
                "max_tokens": self.params.max_tokens,
                "seed": self.params.seed,
            },
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency: float = 0.0


@dataclass(frozen=True)
class ChatExchange:
    fingerprint: str
    request: dict
    response: dict

    @staticmethod
    def capture(request: ChatRequest, response: ChatResponse) -> "ChatExchange":
        return ChatExchange(
            fingerprint=request.fingerprint(),
            request=json.loads(request.canonical()),
            response={
                "text": response.text,
                "prompt_tokens": response.prompt_tokens,
                "completion_tokens": response.completion_tokens,
                "latency": response.latency,
            },
        )

    def to_json_line(self) -> str:
        return json.dumps(
            {"fingerprint": self.fingerprint, "request": self.request, "response": self.response},
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
        )

    @staticmethod
    def from_json_line(line: str) -> "ChatExchange":
        obj = json.loads(line)
        return ChatExchange(
            fingerprint=obj["fingerprint"], request=obj["request"], response=obj["response"]
        )

    def chat_response(self) -> ChatResponse:
        r = self.response
        return ChatResponse(
            text=r["text"],
            prompt_tokens=r.get("prompt_tokens", 0),
            completion_tokens=r.get("completion_tokens", 0),
            latency=r.get("latency", 0.0),
        )


class ModelBackend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


# --- scripted -------------------------------------------------------------------


@dataclass(frozen=True)
class ScriptedRule:
    match: dict  # one of {"contains": str}, {"contains_all": [str]}, {"regex": str}
    respond: str

    def matches(self, text: str) -> bool:
        if "contains" in self.match:
            return self.match["contains"] in text
        if "contains_all" in self.match:
            return all(needle in text for needle in self.match["contains_all"])
        if "regex" in self.match:
            return re.search(self.match["regex"], text, re.DOTALL) is not None
        raise ValueError(f"unknown match kind: {sorted(self.match)}")


@dataclass(frozen=True)
class ScriptedPolicy:
    rules: tuple[ScriptedRule, ...]
    default: Optional[str] = None

    @staticmethod
    def from_dict(data: dict) -> "ScriptedPolicy":
        rules = tuple(
            ScriptedRule(match=r["match"], respond=r["respond"]) for r in data.get("rules", [])
        )
        return ScriptedPolicy(rules=rules, default=data.get("default"))

    def to_dict(self) -> dict:
        return {
            "rules": [{"match": dict(r.match), "respond": r.respond} for r in self.rules],
            "default": self.default,
        }


class ScriptedBackend:
    """Deterministic mock: first matching rule wins; pure function of request text."""

    def __init__(self, policy: ScriptedPolicy):
        self.policy = policy

    def complete(self, request: ChatRequest) -> ChatResponse:
        text = request.text()
        for rule in self.policy.rules:
            if rule.matches(text):
                return self._respond(text, rule.respond)
        if self.policy.default is not None:
            return self._respond(text, self.policy.default)
        raise NoRuleMatched(f"no scripted rule matched request {request.fingerprint()[:12]}")

    @staticmethod
    def _respond(prompt_text: str, answer: str) -> ChatResponse:
        return ChatResponse(
            text=answer,
            prompt_tokens=len(prompt_text.split()),
            completion_tokens=len(answer.split()),
            latency=0.0,
        )


# --- record / replay ------------------------------------------------------------------


class ReplayBackend:
    """Replays a recorded cassette; FIFO per fingerprint; never improvises."""

    def __init__(self, exchanges: list[ChatExchange]):
        self._lock = threading.Lock()
        self._queues: dict[str, list[ChatExchange]] = {}
        for exchange in exchanges:
            self._queues.setdefault(exchange.fingerprint, []).append(exchange)

    @staticmethod
    def from_path(path: str | Path) -> "ReplayBackend":
        exchanges = load_cassette(path)
        return ReplayBackend(exchanges)

    def complete(self, request: ChatRequest) -> ChatResponse:
        fp = request.fingerprint()
        with self._lock:
            queue = self._queues.get(fp)
            if not queue:
                raise CassetteMiss(fp)
            return queue.pop(0).chat_response()


class RecordingBackend:
    """Passes through to an inner backend while appending exchanges to a sink."""

    def __init__(self, inner: ModelBackend, sink):
        # sink: a list (appended to) or a path (JSONL appended per call)
        self.inner = inner
        self._sink = sink
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.inner.complete(request)
        exchange = ChatExchange.capture(request, response)
        with self._lock:
            if isinstance(self._sink, list):
                self._sink.append(exchange)
            else:
                try:
                    with open(self._sink, "a", encoding="utf-8") as fh:
                        fh.write(exchange.to_json_line() + "\n")
                except OSError as exc:
                    raise SinkWriteFailure(str(exc)) from exc
        return response


def load_cassette(path: str | Path) -> list[ChatExchange]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ChatExchange.from_json_line(line) for line in lines if line.strip()]


def save_cassette(path: str | Path, exchanges: list[ChatExchange]) -> None:
    Path(path).write_text(
        "".join(e.to_json_line() + "\n" for e in exchanges), encoding="utf-8"
    )


class CallCounter:
    """Wrapper counting complete() calls; used to assert replay closure."""

    def __init__(self, inner: ModelBackend):
        self.inner = inner
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.calls += 1
        return self.inner.complete(request)


# --- live HTTP ---------------------------------------------------------------------------

AUTH_TOKEN_ENV = "STREX_API_TOKEN"


@dataclass(frozen=True)
class LiveConfig:
    endpoint: str
    model: str
    timeout: float = 60.0
    transport_retries: int = 2
    auth_token_env: str = AUTH_TOKEN_ENV


class LiveBackend:
    """Chat-completions HTTP client (messages array in, single text choice out)."""

    def __init__(self, config: LiveConfig, client: Optional[httpx.Client] = None):
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout)

    def complete(self, request: ChatRequest) -> ChatResponse:
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.extend({"role": r, "content": c} for r, c in request.messages)
        payload = {
            "model": self.config.model,
            "messages": messages,
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_tokens,
        }
        if request.params.seed is not None:
            payload["seed"] = request.params.seed
        headers = {}
        token = os.environ.get(self.config.auth_token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"

        last_error: Optional[Exception] = None
        for _ in range(self.config.transport_retries + 1):
            started = time.perf_counter()
            try:
                resp = self._client.post(self.config.endpoint, json=payload, headers=headers)
                resp.raise_for_status()
                body = resp.json()
                usage = body.get("usage", {})
                return ChatResponse(
                    text=body["choices"][0]["message"]["content"],
                    prompt_tokens=usage.get("prompt_tokens", 0),
                    completion_tokens=usage.get("completion_tokens", 0),
                    latency=time.perf_counter() - started,
                )
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                last_error = exc
        raise BackendUnavailable(f"transport failure after retries: {last_error}")
