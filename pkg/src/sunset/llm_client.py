"""Chat-completion and embedding client for OpenAI-compatible endpoints.

One client serves generation, rating, and embedding. Retries with jittered
exponential backoff, enforces a concurrency bound internally, and accumulates
token usage in a run-level ledger. A scripted mock transport implements the
same wire so every pipeline can run fully offline.
"""
from __future__ import annotations

import json
import math
import random
import threading
import time
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np
import requests


class ClientError(Exception):
    """Base class for client failures."""


class AuthError(ClientError):
    """Credential rejected; never retried."""


class ExhaustedRetries(ClientError):
    """All attempts failed (or a non-retryable status was returned)."""


class MalformedResponse(ClientError):
    """Success status but the body does not follow the wire format."""


class DimensionMismatch(ClientError):
    """Embedding backend returned vectors of different dimensions."""


class MockExhausted(ClientError):
    """Scripted reply queue ran out; aborts the run."""


class TransportFailure(Exception):
    """Network-level failure; counts as a retryable attempt."""


VALID_ROLES = frozenset({"system", "user", "assistant"})

# Sampling defaults; validation-style calls override temperature to 0 and
# title generation raises it to 1.2.
DEFAULT_TEMPERATURE = 1.0
DEFAULT_TOP_P = 0.9
DEFAULT_MAX_TOKENS = 2000

RETRYABLE_STATUSES = frozenset({429, 500, 502, 503})


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    backoff_base: float = 0.5
    backoff_cap: float = 30.0
    retryable_statuses: frozenset[int] = RETRYABLE_STATUSES

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.backoff_base > self.backoff_cap:
            raise ValueError("backoff_base must not exceed backoff_cap")

    def delay(self, attempt: int) -> float:
        """Backoff before attempt ``attempt + 1`` (attempts count from 1)."""
        if self.backoff_base <= 0:
            return 0.0
        raw = min(self.backoff_cap, self.backoff_base * 2 ** (attempt - 1))
        return raw * random.uniform(0.5, 1.5)


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[dict[str, str], ...]
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        msgs = tuple(self.messages)
        object.__setattr__(self, "messages", msgs)
        if not msgs:
            raise ValueError("messages must be non-empty")
        for m in msgs:
            if m.get("role") not in VALID_ROLES:
                raise ValueError(f"invalid role: {m.get('role')!r}")
        if msgs[-1]["role"] != "user":
            raise ValueError("last message must have role 'user'")
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise ValueError("temperature must be finite and >= 0")
        if not math.isfinite(self.top_p) or not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


def user_request(model: str, prompt: str, **overrides: Any) -> ChatRequest:
    """Single user-message request, the shape every pipeline stage uses."""
    return ChatRequest(model=model, messages=({"role": "user", "content": prompt},), **overrides)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


class TokenLedger:
    """Thread-safe, monotone token totals for one run."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.prompt_tokens = 0
        self.completion_tokens = 0
        self.calls = 0

    def add(self, prompt: int, completion: int) -> None:
        with self._lock:
            self.prompt_tokens += max(0, prompt)
            self.completion_tokens += max(0, completion)
            self.calls += 1

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {
                "prompt_tokens": self.prompt_tokens,
                "completion_tokens": self.completion_tokens,
                "total_tokens": self.prompt_tokens + self.completion_tokens,
                "calls": self.calls,
            }


class HttpTransport:
    """POSTs JSON to an OpenAI-compatible endpoint."""

    def __init__(self, base_url: str, api_key: str = "", timeout: float = 120.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self._session = requests.Session()

    def send(self, path: str, payload: dict) -> tuple[int, Any]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._session.post(
                self.base_url + path, json=payload, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransportFailure(str(exc)) from exc
        try:
            body = resp.json()
        except ValueError:
            body = resp.text
        return resp.status_code, body


class MockTransport:
    """Scripted transport: replies consumed strictly in order.

    Reply entries (one JSON object per fixture line):
      * ``"text"`` or ``{"content": "text"}``      -> 200 chat completion
      * ``{"status": 500}``                         -> error status
      * ``{"embedding": [[...], ...]}``             -> 200 embeddings body
      * ``{"raw": ...}``                            -> 200 with body as-is
    """

    def __init__(self, replies: Iterable[Any]) -> None:
        self._replies = list(replies)
        self._lock = threading.Lock()
        self._pos = 0
        self.requests: list[tuple[str, dict]] = []

    @classmethod
    def from_jsonl(cls, path: str) -> "MockTransport":
        replies = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    replies.append(json.loads(line))
        return cls(replies)

    @property
    def consumed(self) -> int:
        return self._pos

    @property
    def remaining(self) -> int:
        return len(self._replies) - self._pos

    def skip(self, n: int) -> None:
        """Fast-forward past replies already consumed by a checkpointed run."""
        with self._lock:
            self._pos = min(len(self._replies), self._pos + max(0, n))

    def send(self, path: str, payload: dict) -> tuple[int, Any]:
        with self._lock:
            if self._pos >= len(self._replies):
                raise MockExhausted(f"mock reply queue exhausted after {self._pos} replies")
            reply = self._replies[self._pos]
            self._pos += 1
            self.requests.append((path, payload))
        if isinstance(reply, str):
            reply = {"content": reply}
        if "status" in reply and reply["status"] != 200:
            return int(reply["status"]), reply.get("body")
        if "raw" in reply:
            return 200, reply["raw"]
        if "embedding" in reply:
            data = [
                {"index": i, "embedding": vec} for i, vec in enumerate(reply["embedding"])
            ]
            return 200, {"data": data, "usage": {"prompt_tokens": 0}}
        content = reply.get("content", "")
        prompt_est = sum(len(m.get("content", "")) for m in payload.get("messages", [])) // 4
        return 200, {
            "choices": [{"message": {"role": "assistant", "content": content}}],
            "usage": {
                "prompt_tokens": reply.get("prompt_tokens", prompt_est),
                "completion_tokens": reply.get("completion_tokens", len(content) // 4),
            },
        }


class LLMClient:
    """Shareable client; the concurrency bound and ledger live here, not in
    callers."""

    def __init__(
        self,
        transport,
        model: str = "",
        embed_model: str = "",
        max_concurrency: int = 4,
        policy: RetryPolicy | None = None,
    ) -> None:
        if max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        self.transport = transport
        self.model = model
        self.embed_model = embed_model or model
        self.policy = policy or RetryPolicy()
        self.ledger = TokenLedger()
        self._gate = threading.BoundedSemaphore(max_concurrency)

    def _request(self, path: str, payload: dict, policy: RetryPolicy) -> Any:
        last_status: int | None = None
        for attempt in range(1, policy.max_attempts + 1):
            try:
                with self._gate:
                    status, body = self.transport.send(path, payload)
            except TransportFailure as exc:
                last_status = None
                if attempt >= policy.max_attempts:
                    raise ExhaustedRetries(
                        f"{path}: {policy.max_attempts} attempts failed ({exc})"
                    ) from exc
                time.sleep(policy.delay(attempt))
                continue
            if status in (401, 403):
                raise AuthError(f"{path}: credential rejected (status {status})")
            if status == 200:
                return body
            last_status = status
            if status not in policy.retryable_statuses:
                raise ExhaustedRetries(f"{path}: non-retryable status {status}")
            if attempt < policy.max_attempts:
                time.sleep(policy.delay(attempt))
        raise ExhaustedRetries(
            f"{path}: {policy.max_attempts} attempts failed (last status {last_status})"
        )

    def complete(self, request: ChatRequest, policy: RetryPolicy | None = None) -> ChatResponse:
        payload = {
            "model": request.model or self.model,
            "messages": [dict(m) for m in request.messages],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        }
        body = self._request("/v1/chat/completions", payload, policy or self.policy)
        try:
            content = body["choices"][0]["message"]["content"]
            usage = body.get("usage") or {}
            prompt_toks = int(usage.get("prompt_tokens", 0))
            completion_toks = int(usage.get("completion_tokens", 0))
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected completion body: {body!r}") from exc
        if content is None:
            raise MalformedResponse("completion content missing")
        self.ledger.add(prompt_toks, completion_toks)
        return ChatResponse(str(content), prompt_toks, completion_toks)

    def embed(self, texts: Sequence[str], policy: RetryPolicy | None = None) -> list[list[float]]:
        if not texts:
            raise ValueError("texts must be non-empty")
        if any(not t.strip() for t in texts):
            raise ValueError("every text must be non-empty after trimming")
        payload = {"model": self.embed_model, "input": list(texts)}
        body = self._request("/v1/embeddings", payload, policy or self.policy)
        try:
            rows = sorted(body["data"], key=lambda d: d.get("index", 0))
            vectors = [list(map(float, r["embedding"])) for r in rows]
            usage = body.get("usage") or {}
        except (KeyError, TypeError) as exc:
            raise MalformedResponse(f"unexpected embeddings body: {body!r}") from exc
        if len(vectors) != len(texts):
            raise MalformedResponse(
                f"expected {len(texts)} embeddings, got {len(vectors)}"
            )
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise DimensionMismatch(f"inconsistent embedding dimensions: {sorted(dims)}")
        self.ledger.add(int(usage.get("prompt_tokens", 0)), 0)
        out = []
        for v in vectors:
            arr = np.asarray(v, dtype=float)
            norm = float(np.linalg.norm(arr))
            if norm == 0:
                raise MalformedResponse("zero-norm embedding returned")
            out.append((arr / norm).tolist())
        return out
