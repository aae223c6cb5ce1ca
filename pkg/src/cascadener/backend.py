"""Chat-completion / embedding clients and a deterministic replay backend.

Everything speaks one wire protocol: ``POST {base}/chat/completions`` with
``model, messages, temperature, seed, max_tokens`` (answer read from
``choices[0].message.content``) and ``POST {base}/embeddings`` (vectors read
from ``data[i].embedding``).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .errors import (
    BackendError,
    DimensionMismatch,
    EmptyInput,
    ReplayMiss,
    RequestTimeout,
    SchemaError,
    TransportError,
)

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role != "system" and not self.content:
            raise ValueError(f"{self.role} message must have content")


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    seed: int = 0
    max_tokens: int = 512

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    model_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("embedding contains non-finite values")

    def __len__(self):
        return len(self.values)


def canonical_messages(messages: Sequence[ChatMessage]) -> list[dict]:
    return [{"role": m.role, "content": m.content} for m in messages]


def request_key(messages: Sequence[ChatMessage], params: GenerationParams | None = None) -> str:
    """Stable hash of a chat request.

    With ``params=None`` the key covers the messages only; scripts written by
    hand usually key that way.
    """
    payload = {"messages": canonical_messages(messages)}
    if params is not None:
        payload["params"] = asdict(params)
    blob = json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def embedding_key(text: str) -> str:
    return hashlib.sha256(("embed\0" + text).encode("utf-8")).hexdigest()


def _check_dimensions(vectors: list[EmbeddingVector], expected: int) -> list[EmbeddingVector]:
    if len(vectors) != expected:
        raise DimensionMismatch(f"expected {expected} vectors, got {len(vectors)}")
    dims = {len(v) for v in vectors}
    if len(dims) > 1:
        raise DimensionMismatch(f"mixed embedding dimensions {sorted(dims)}")
    return vectors


@dataclass
class BackendConfig:
    base_url: str = ""
    model: str = ""
    api_key_env: str = ""
    timeout: float = 60.0
    retries: int = 2
    max_in_flight: int = 4
    embedding_model: str = ""
    backoff: float = 0.1


class HTTPBackend:
    """Client for an OpenAI-style chat/embedding endpoint."""

    def __init__(self, config: BackendConfig, client: httpx.Client | None = None):
        if not config.base_url:
            raise ValueError("backend base_url is not configured")
        self.config = config
        self.model_id = config.model
        headers = {}
        if config.api_key_env:
            key = os.environ.get(config.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
            else:
                logger.warning("environment variable %s is not set", config.api_key_env)
        self._client = client or httpx.Client(timeout=config.timeout)
        self._headers = headers
        self._slots = threading.BoundedSemaphore(max(1, config.max_in_flight))

    def close(self):
        self._client.close()

    def _post(self, route: str, payload: dict) -> dict:
        url = self.config.base_url.rstrip("/") + route
        attempts = self.config.retries + 1
        for attempt in range(1, attempts + 1):
            try:
                with self._slots:
                    resp = self._client.post(url, json=payload, headers=self._headers,
                                             timeout=self.config.timeout)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise TransportError(f"HTTP {resp.status_code} from {url}")
                if resp.status_code >= 400:
                    # client errors will not improve on retry
                    raise BackendError(f"HTTP {resp.status_code} from {url}")
                try:
                    return resp.json()
                except ValueError as exc:
                    raise SchemaError(f"response from {url} is not JSON") from exc
            except httpx.TimeoutException as exc:
                err = RequestTimeout(f"request to {url} timed out")
                err.__cause__ = exc
            except httpx.TransportError as exc:
                err = TransportError(f"cannot reach {url}: {exc}")
                err.__cause__ = exc
            except TransportError as exc:
                err = exc
            if attempt == attempts:
                raise err
            logger.info("retrying %s after %s (attempt %d/%d)", url, err, attempt, attempts)
            time.sleep(min(self.config.backoff * 2 ** attempt, 2.0))
        raise AssertionError("unreachable")

    def chat_complete(self, messages: Sequence[ChatMessage], params: GenerationParams) -> str:
        payload = {
            "model": self.config.model,
            "messages": canonical_messages(messages),
            "temperature": params.temperature,
            "seed": params.seed,
            "max_tokens": params.max_tokens,
        }
        body = self._post("/chat/completions", payload)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise SchemaError("response has no choices[0].message.content") from exc
        if not isinstance(content, str):
            raise SchemaError("message content is not a string")
        return content

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise EmptyInput("embed_texts needs at least one text")
        model = self.config.embedding_model or self.config.model
        body = self._post("/embeddings", {"model": model, "input": list(texts)})
        try:
            data = sorted(body["data"], key=lambda d: d.get("index", 0))
            vectors = [EmbeddingVector(d["embedding"], model) for d in data]
        except (KeyError, TypeError) as exc:
            raise SchemaError("response has no data[i].embedding") from exc
        return _check_dimensions(vectors, len(texts))


def basis_embedder(dim: int = 8) -> Callable[[str], list[float]]:
    """Map each text to a hashed unit basis vector of ``dim`` components."""

    def embed(text: str) -> list[float]:
        slot = int(embedding_key(text), 16) % dim
        return [1.0 if i == slot else 0.0 for i in range(dim)]

    return embed


@dataclass
class MockBackend:
    """Scripted in-process backend.

    Chat lookups try, in order: the exact request key (messages + params),
    the messages-only key, then ``responder``. Embeddings come from
    ``vectors`` (text -> values) and then ``embedder``.
    """

    script: dict[str, str] = field(default_factory=dict)
    responder: Callable[[Sequence[ChatMessage], GenerationParams], str] | None = None
    vectors: dict[str, Sequence[float]] = field(default_factory=dict)
    embedder: Callable[[str], Sequence[float]] | None = None
    model_id: str = "mock"

    def chat_complete(self, messages: Sequence[ChatMessage], params: GenerationParams) -> str:
        for key in (request_key(messages, params), request_key(messages)):
            if key in self.script:
                return self.script[key]
        if self.responder is not None:
            return self.responder(messages, params)
        raise ReplayMiss(f"no scripted response for request {request_key(messages, params)[:12]}")

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise EmptyInput("embed_texts needs at least one text")
        out = []
        for text in texts:
            if text in self.vectors:
                values = self.vectors[text]
            elif self.embedder is not None:
                values = self.embedder(text)
            else:
                raise ReplayMiss(f"no scripted embedding for {text!r}")
            out.append(EmbeddingVector(values, self.model_id))
        return _check_dimensions(out, len(texts))


class ReplayBackend:
    """Record/playback wrapper backed by a line-delimited JSON file.

    Each line is ``{"kind": "chat"|"embed", "key": ..., "response": ...}``.
    With ``inner`` set, misses are forwarded and appended to the file;
    without it, a miss raises :class:`ReplayMiss`.
    """

    def __init__(self, path: str | Path, inner=None):
        self.path = Path(path)
        self.inner = inner
        self.model_id = getattr(inner, "model_id", "replay")
        self._lock = threading.Lock()
        self._chat: dict[str, str] = {}
        self._embed: dict[str, list[float]] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        entry = json.loads(line)
                        store = self._chat if entry["kind"] == "chat" else self._embed
                        store[entry["key"]] = entry["response"]
                    except (ValueError, KeyError) as exc:
                        raise BackendError(f"{self.path}:{lineno}: bad replay entry") from exc

    def __len__(self):
        return len(self._chat) + len(self._embed)

    def _append(self, kind: str, key: str, response):
        line = json.dumps({"kind": kind, "key": key, "response": response}, ensure_ascii=False)
        with self._lock, open(self.path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(line + "\n")

    def chat_complete(self, messages: Sequence[ChatMessage], params: GenerationParams) -> str:
        key = request_key(messages, params)
        if key in self._chat:
            return self._chat[key]
        if self.inner is None:
            raise ReplayMiss(f"request {key[:12]} not in replay file {self.path}")
        content = self.inner.chat_complete(messages, params)
        with self._lock:
            self._chat[key] = content
        self._append("chat", key, content)
        return content

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise EmptyInput("embed_texts needs at least one text")
        missing = [t for t in dict.fromkeys(texts) if embedding_key(t) not in self._embed]
        if missing:
            if self.inner is None:
                raise ReplayMiss(f"{len(missing)} texts not in replay file {self.path}")
            fresh = self.inner.embed_texts(missing)
            for text, vec in zip(missing, fresh):
                key = embedding_key(text)
                with self._lock:
                    self._embed[key] = list(vec.values)
                self._append("embed", key, list(vec.values))
        vectors = [EmbeddingVector(self._embed[embedding_key(t)], self.model_id) for t in texts]
        return _check_dimensions(vectors, len(texts))
