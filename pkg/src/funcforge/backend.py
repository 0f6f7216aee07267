"""Chat-completion backends: a live HTTP client and deterministic replay.

All model traffic in the framework flows through one interface,
``complete(ChatRequest) -> ChatResponse``.  The live backend speaks the
chat-completions wire protocol over HTTP; the replay backend serves
responses from a cassette, which makes every test and every recorded
training run fully deterministic.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .errors import BackendError, CassetteExhausted, CassetteMiss

logger = logging.getLogger(__name__)

ENV_BASE_URL = "FUNCFORGE_BASE_URL"
ENV_API_KEY = "FUNCFORGE_API_KEY"
ENV_MODEL = "FUNCFORGE_MODEL"


@dataclass(frozen=True)
class ToolCall:
    """One function invocation requested by the model.

    ``arguments`` is kept verbatim as the JSON-encoded string received on
    the wire.
    """

    name: str
    arguments: str
    id: str = ""


@dataclass(frozen=True)
class Message:
    role: str
    content: str = ""
    tool_calls: tuple[ToolCall, ...] | None = None
    tool_call_id: str | None = None
    name: str | None = None

    def to_wire(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"role": self.role, "content": self.content}
        if self.tool_calls:
            doc["tool_calls"] = [
                {
                    "id": call.id,
                    "type": "function",
                    "function": {"name": call.name, "arguments": call.arguments},
                }
                for call in self.tool_calls
            ]
        if self.tool_call_id is not None:
            doc["tool_call_id"] = self.tool_call_id
        if self.name is not None:
            doc["name"] = self.name
        return doc


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    model: str = ""
    temperature: float = 0.0
    tools: tuple[Mapping[str, Any], ...] | None = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("the first message must be a system or user message")

    def to_wire(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [message.to_wire() for message in self.messages],
        }
        if self.tools is not None:
            doc["tools"] = [dict(tool) for tool in self.tools]
        return doc


@dataclass(frozen=True)
class ChatResponse:
    content: str | None = None
    tool_calls: tuple[ToolCall, ...] | None = None
    finish_reason: str = "stop"

    def __post_init__(self) -> None:
        if self.content is None and not self.tool_calls:
            raise ValueError("a response carries content, tool calls, or both")

    def to_wire(self) -> dict[str, Any]:
        return {
            "content": self.content,
            "tool_calls": [
                {"id": call.id, "name": call.name, "arguments": call.arguments}
                for call in self.tool_calls
            ]
            if self.tool_calls
            else None,
            "finish_reason": self.finish_reason,
        }

    @classmethod
    def from_wire(cls, doc: Mapping[str, Any]) -> "ChatResponse":
        calls = doc.get("tool_calls")
        return cls(
            content=doc.get("content"),
            tool_calls=tuple(
                ToolCall(name=c["name"], arguments=c["arguments"], id=c.get("id", ""))
                for c in calls
            )
            if calls
            else None,
            finish_reason=doc.get("finish_reason", "stop"),
        )


def text_response(content: str) -> ChatResponse:
    """Convenience constructor for scripted replies."""
    return ChatResponse(content=content, finish_reason="stop")


def tool_call_response(name: str, arguments: Mapping[str, Any] | str, id: str = "") -> ChatResponse:
    """Convenience constructor for scripted tool-call replies."""
    encoded = arguments if isinstance(arguments, str) else json.dumps(arguments)
    return ChatResponse(
        content=None,
        tool_calls=(ToolCall(name=name, arguments=encoded, id=id),),
        finish_reason="tool_calls",
    )


def request_digest(request: ChatRequest) -> str:
    """Stable hex digest of the canonical request serialization.

    Message content is whitespace-normalized so that incidental formatting
    differences do not change the key; everything else (tools included)
    participates verbatim.
    """
    doc = request.to_wire()
    for message in doc["messages"]:
        message["content"] = " ".join(str(message.get("content") or "").split())
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class Cassette:
    """A persisted request->response record for deterministic replay.

    ``sequence`` mode consumes entries in order exactly once; ``keyed``
    mode is a pure function of the request digest.
    """

    mode: str = "sequence"
    entries: list[tuple[str | None, ChatResponse]] = field(default_factory=list)
    pointer: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("sequence", "keyed"):
            raise ValueError(f"unknown cassette mode {self.mode!r}")

    def to_doc(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "entries": [
                {"digest": digest, "response": response.to_wire()}
                for digest, response in self.entries
            ],
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_doc(), handle, indent=2, ensure_ascii=False)
            handle.write("\n")

    @classmethod
    def from_file(cls, path: str) -> "Cassette":
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
        return cls(
            mode=doc["mode"],
            entries=[
                (entry.get("digest"), ChatResponse.from_wire(entry["response"]))
                for entry in doc["entries"]
            ],
        )

    @classmethod
    def from_responses(cls, responses: Iterable[ChatResponse]) -> "Cassette":
        return cls(mode="sequence", entries=[(None, r) for r in responses])


class ReplayBackend:
    """Serves scripted responses; pure, no network, no nondeterminism."""

    def __init__(self, cassette: Cassette):
        self.cassette = cassette
        self._by_digest = (
            {digest: response for digest, response in cassette.entries}
            if cassette.mode == "keyed"
            else None
        )

    @property
    def concurrency_safe(self) -> bool:
        return self.cassette.mode == "keyed"

    def complete(self, request: ChatRequest) -> ChatResponse:
        if self.cassette.mode == "sequence":
            if self.cassette.pointer >= len(self.cassette.entries):
                raise CassetteExhausted(
                    f"sequence cassette exhausted after {self.cassette.pointer} responses"
                )
            _, response = self.cassette.entries[self.cassette.pointer]
            self.cassette.pointer += 1
            return response
        digest = request_digest(request)
        assert self._by_digest is not None
        if digest not in self._by_digest:
            raise CassetteMiss(f"no recorded response for request digest {digest}")
        return self._by_digest[digest]


class RecordingBackend:
    """Wraps another backend and persists (digest, response) pairs.

    Recorded cassettes are keyed, so replays are order-independent and safe
    for concurrent evaluation.  The first response recorded for a digest
    wins; a deterministic inner backend never produces a conflict.
    """

    def __init__(self, inner: Any, path: str):
        self.inner = inner
        self.path = path
        self.cassette = Cassette(mode="keyed", entries=[])
        self._seen: set[str] = set()

    @property
    def concurrency_safe(self) -> bool:
        return bool(getattr(self.inner, "concurrency_safe", True))

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.inner.complete(request)
        digest = request_digest(request)
        if digest not in self._seen:
            self._seen.add(digest)
            self.cassette.entries.append((digest, response))
            self.cassette.save(self.path)
        return response


def record(backend: Any, path: str) -> RecordingBackend:
    """Wrap ``backend`` so every completed call is persisted to ``path``."""
    return RecordingBackend(backend, path)


class LiveBackend:
    """HTTP client for chat-completions-compatible services.

    Transient transport failures and 429/5xx responses are retried with
    exponential backoff; other HTTP errors raise :class:`BackendError`
    carrying the status code.
    """

    concurrency_safe = True

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        model: str = "",
        timeout_s: float = 120.0,
        max_retries: int = 3,
        backoff_s: float = 0.5,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s

    @classmethod
    def from_env(cls, model: str = "") -> "LiveBackend":
        base_url = os.environ.get(ENV_BASE_URL, "")
        if not base_url:
            raise BackendError(f"{ENV_BASE_URL} is not set")
        return cls(
            base_url=base_url,
            api_key=os.environ.get(ENV_API_KEY, ""),
            model=model or os.environ.get(ENV_MODEL, ""),
        )

    def complete(self, request: ChatRequest) -> ChatResponse:
        import httpx

        payload = request.to_wire()
        if not payload["model"]:
            payload["model"] = self.model
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.base_url}/chat/completions"

        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                reply = httpx.post(url, json=payload, headers=headers, timeout=self.timeout_s)
            except httpx.HTTPError as exc:
                logger.warning("transport error (attempt %d): %s", attempt + 1, exc)
                last_error = exc
                continue
            if reply.status_code in (429,) or reply.status_code >= 500:
                logger.warning("retryable status %d (attempt %d)", reply.status_code, attempt + 1)
                last_error = BackendError(
                    f"service returned status {reply.status_code}", reply.status_code
                )
                continue
            if reply.status_code != 200:
                raise BackendError(
                    f"service returned status {reply.status_code}: {reply.text[:500]}",
                    reply.status_code,
                )
            return self._parse(reply.json())
        raise BackendError(f"retries exhausted: {last_error}") from last_error

    @staticmethod
    def _parse(doc: Mapping[str, Any]) -> ChatResponse:
        try:
            choice = doc["choices"][0]
            message = choice["message"]
        except (KeyError, IndexError) as exc:
            raise BackendError(f"malformed completion payload: {exc}") from exc
        calls = message.get("tool_calls")
        return ChatResponse(
            content=message.get("content"),
            tool_calls=tuple(
                ToolCall(
                    name=c["function"]["name"],
                    arguments=c["function"]["arguments"],
                    id=c.get("id", ""),
                )
                for c in calls
            )
            if calls
            else None,
            finish_reason=choice.get("finish_reason", "stop"),
        )
