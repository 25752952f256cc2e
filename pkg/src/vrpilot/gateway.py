"""Chat-completion backends: live HTTP, digest-keyed replay, and scripted FIFO.

The live backend speaks the OpenAI-compatible chat-completions wire format.
Recorded transcripts key responses by a digest of (system, turns,
temperature) so a replayed run matches requests by content, not position.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .errors import GatewayError, ReplayMissError, TranscriptParseError

API_KEY_ENV = "VRPILOT_API_KEY"
DEFAULT_BASE_URL = "https://api.openai.com/v1"

FINISH_STOP = "stop"
FINISH_LENGTH = "length"
FINISH_ERROR = "error"


@dataclass(frozen=True)
class ChatRequest:
    model_name: str
    system: str
    turns: tuple[tuple[str, str], ...]
    temperature: float
    max_tokens: int = 2048

    def __post_init__(self):
        if not self.turns:
            raise GatewayError("chat request must contain at least one turn")
        if not 0.0 <= self.temperature <= 1.0:
            raise GatewayError(f"temperature {self.temperature} outside [0.0, 1.0]")

    def digest(self) -> str:
        """Replay-matching key; deliberately excludes model_name and max_tokens."""
        payload = json.dumps(
            {
                "system": self.system,
                "turns": [list(t) for t in self.turns],
                "temperature": float(self.temperature),
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: str = FINISH_STOP
    latency_ms: int = 0

    def __post_init__(self):
        if not self.content and self.finish_reason != FINISH_ERROR:
            raise GatewayError("empty content is only allowed with finish_reason=error")


@dataclass
class Transcript:
    """Ordered (request, response) pairs from one or more recorded sessions."""

    entries: list[tuple[ChatRequest, ChatResponse]] = field(default_factory=list)

    def append(self, request: ChatRequest, response: ChatResponse) -> None:
        self.entries.append((request, response))

    def digest(self) -> str:
        """Content digest over the ordered request sequence."""
        payload = json.dumps(
            [[req.digest(), resp.content] for req, resp in self.entries],
            sort_keys=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def record_session(transcript: Transcript, path) -> None:
    """Serialize a transcript to a JSON file (one object per pair)."""
    entries = []
    for request, response in transcript.entries:
        entries.append(
            {
                "digest": request.digest(),
                "request": {
                    "model_name": request.model_name,
                    "system": request.system,
                    "turns": [list(t) for t in request.turns],
                    "temperature": request.temperature,
                    "max_tokens": request.max_tokens,
                },
                "response": {
                    "content": response.content,
                    "finish_reason": response.finish_reason,
                    "latency_ms": response.latency_ms,
                },
            }
        )
    Path(path).write_text(json.dumps({"entries": entries}, indent=2, ensure_ascii=False), encoding="utf-8")


def load_session(path) -> Transcript:
    """Parse a transcript file; structural inverse of :func:`record_session`."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise TranscriptParseError(f"{path}: invalid JSON at byte offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(data, dict) or not isinstance(data.get("entries"), list):
        raise TranscriptParseError(f"{path}: expected an object with an 'entries' array")
    transcript = Transcript()
    for i, entry in enumerate(data["entries"]):
        try:
            req = entry["request"]
            resp = entry["response"]
            request = ChatRequest(
                model_name=req["model_name"],
                system=req["system"],
                turns=tuple((role, content) for role, content in req["turns"]),
                temperature=req["temperature"],
                max_tokens=req["max_tokens"],
            )
            response = ChatResponse(
                content=resp["content"],
                finish_reason=resp["finish_reason"],
                latency_ms=resp["latency_ms"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise TranscriptParseError(f"{path}: malformed entry #{i}: {exc}") from exc
        transcript.append(request, response)
    return transcript


class OpenAIChatBackend:
    """Live OpenAI-compatible chat-completions client.

    Retries transport errors and HTTP 429/5xx up to ``max_attempts`` times
    with exponential backoff; other 4xx responses fail immediately. Retried
    payloads are byte-identical. Response content is returned verbatim.
    """

    def __init__(
        self,
        base_url: str = DEFAULT_BASE_URL,
        api_key: str | None = None,
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff_seconds: float = 1.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not self.api_key:
            raise GatewayError(f"no API key: set {API_KEY_ENV} or pass api_key")
        self.max_attempts = max_attempts
        self.backoff_seconds = backoff_seconds
        self._client = httpx.Client(timeout=timeout)

    def _payload(self, request: ChatRequest) -> dict:
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.extend({"role": role, "content": content} for role, content in request.turns)
        return {
            "model": request.model_name,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = self._payload(request)
        headers = {"Authorization": f"Bearer {self.api_key}"}
        url = f"{self.base_url}/chat/completions"
        last_error = "no attempt made"
        started = time.monotonic()
        for attempt in range(1, self.max_attempts + 1):
            try:
                http_response = self._client.post(url, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
            else:
                if http_response.status_code == 200:
                    return self._parse(http_response, started)
                last_error = f"HTTP {http_response.status_code}: {http_response.text[:500]}"
                if http_response.status_code != 429 and http_response.status_code < 500:
                    raise GatewayError(last_error)
            if attempt < self.max_attempts:
                time.sleep(self.backoff_seconds * (2 ** (attempt - 1)))
        raise GatewayError(f"gave up after {self.max_attempts} attempts: {last_error}")

    def _parse(self, http_response: httpx.Response, started: float) -> ChatResponse:
        latency_ms = int((time.monotonic() - started) * 1000)
        try:
            body = http_response.json()
            choice = body["choices"][0]
            content = choice["message"]["content"]
            finish = choice.get("finish_reason") or FINISH_STOP
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed completion response: {exc}") from exc
        if content is None:
            content = ""
        finish_reason = FINISH_LENGTH if finish == "length" else FINISH_STOP
        if not content:
            finish_reason = FINISH_ERROR
        return ChatResponse(content=content, finish_reason=finish_reason, latency_ms=latency_ms)

    def close(self) -> None:
        self._client.close()


class ReplayBackend:
    """Deterministic backend answering from a recorded transcript.

    Lookup is by request digest. A digest recorded more than once replays
    its responses in recorded order, then keeps returning the last one.
    """

    def __init__(self, transcript: Transcript):
        self._responses: dict[str, list[ChatResponse]] = {}
        for request, response in transcript.entries:
            self._responses.setdefault(request.digest(), []).append(response)
        self._cursors: dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        digest = request.digest()
        with self._lock:
            recorded = self._responses.get(digest)
            if not recorded:
                raise ReplayMissError(f"no recorded response for request digest {digest}")
            cursor = self._cursors.get(digest, 0)
            self._cursors[digest] = cursor + 1
            return recorded[min(cursor, len(recorded) - 1)]


class RecordingBackend:
    """Forwards to an inner backend and appends each pair to a transcript."""

    def __init__(self, inner, transcript: Transcript | None = None):
        self.inner = inner
        self.transcript = transcript if transcript is not None else Transcript()
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.inner.complete(request)
        with self._lock:
            self.transcript.append(request, response)
        return response

    def save(self, path) -> None:
        with self._lock:
            record_session(self.transcript, path)


class ScriptedBackend:
    """FIFO queue of canned response contents, for simple end-to-end tests.

    Single-consumer by contract. With ``cycle=True`` the script repeats
    forever instead of erroring when exhausted.
    """

    def __init__(self, contents: list[str], cycle: bool = False):
        if not contents:
            raise GatewayError("scripted backend needs at least one response")
        self._contents = list(contents)
        self._cycle = cycle
        self._index = 0
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            if self._index >= len(self._contents):
                if not self._cycle:
                    raise GatewayError("scripted backend exhausted")
                self._index = 0
            content = self._contents[self._index]
            self._index += 1
        return ChatResponse(content=content, finish_reason=FINISH_STOP, latency_ms=0)
