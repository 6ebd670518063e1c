"""Provider abstraction for every external service the pipeline touches.

Four service kinds (chat completion, web search, rerank, embeddings) with
three interchangeable backends each: a live HTTP client, a scripted mock,
and a record/replay fixture. Chat providers are selected per pipeline
role, so e.g. reasoning and coding can run on different models. A
deterministic clock rides along so replayed sessions reproduce recorded
wall times byte for byte.
"""

import hashlib
import json
import time
from collections import Counter
from dataclasses import dataclass, field, replace

import requests

from .rag import hash_embed

# Pipeline roles that resolve to an independently configured chat model.
CHAT_ROLES = ("reasoning", "graph_construction", "breakdown", "synthesis", "coding")

DEFAULT_SEARCH_COUNT = 20
DEFAULT_HTTP_TIMEOUT = 120.0


class ProviderError(Exception):
    """Application-level provider failure; not retried."""


class TransportError(ProviderError):
    """Network-level failure; eligible for retry."""


class ReplayMismatchError(ProviderError):
    """A replayed request diverged from the recorded fixture."""


@dataclass
class GenerationParams:
    max_tokens: int = 32768
    temperature: float = 0.7
    top_p: float = 0.8
    top_k: int = 20
    repetition_penalty: float = 1.05

    def to_dict(self) -> dict:
        return {
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "top_k": self.top_k,
            "repetition_penalty": self.repetition_penalty,
        }

    def with_max_tokens(self, max_tokens: int) -> "GenerationParams":
        return replace(self, max_tokens=max_tokens)


@dataclass
class Message:
    role: str  # system | user | assistant
    content: str


@dataclass
class ChatRequest:
    role: str  # pipeline role, one of CHAT_ROLES
    messages: list[Message]
    params: GenerationParams = field(default_factory=GenerationParams)
    stream: bool = False


@dataclass
class ChatResponse:
    text: str
    token_count: int
    finish_reason: str = "stop"


@dataclass
class WebPage:
    url: str
    title: str
    content: str


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


def chat_digest(request: ChatRequest) -> str:
    payload = {
        "kind": "chat",
        "role": request.role,
        "messages": [
            {"role": m.role, "content": _normalize_ws(m.content)}
            for m in request.messages
        ],
        "params": request.params.to_dict(),
    }
    return _digest(payload)


def _digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _search_digest(query: str, count: int) -> str:
    return _digest({"kind": "search", "query": _normalize_ws(query), "count": count})


def _rerank_digest(query_with_context: str, documents: list[str]) -> str:
    return _digest(
        {
            "kind": "rerank",
            "query": _normalize_ws(query_with_context),
            "documents": [_normalize_ws(d) for d in documents],
        }
    )


def _embed_digest(texts: list[str]) -> str:
    return _digest({"kind": "embed", "texts": [_normalize_ws(t) for t in texts]})


_CLOCK_DIGEST = _digest({"kind": "clock"})


def _validate_chat_request(request: ChatRequest) -> None:
    if not request.messages:
        raise ValueError("chat request must carry at least one message")
    for m in request.messages:
        if m.role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown message role {m.role!r}")


# ---------------------------------------------------------------------------
# Scripted mock
# ---------------------------------------------------------------------------


class MockProviderSet:
    """Fully scripted providers for offline runs and tests.

    Chat responses pop per role in order; search results are keyed by the
    exact query string; rerank scores pop per call (or come from a
    callable); embeddings use the deterministic hash embedding. Every
    request is captured for assertions.
    """

    def __init__(
        self,
        chat_scripts: dict[str, list[str]] | None = None,
        search_results: dict[str, list[WebPage]] | None = None,
        rerank_scores=None,
        default_search: list[WebPage] | None = None,
        cycle: bool = False,
        stream_chunk_size: int = 7,
    ) -> None:
        self._scripts = {role: list(texts) for role, texts in (chat_scripts or {}).items()}
        self._cursor: dict[str, int] = {}
        self._search = dict(search_results or {})
        self._default_search = default_search
        self._rerank_scores = rerank_scores
        self._rerank_cursor = 0
        self._cycle = cycle
        self._stream_chunk_size = stream_chunk_size
        self._clock = 0.0
        self.chat_requests: list[ChatRequest] = []
        self.search_requests: list[tuple[str, int]] = []
        self.rerank_requests: list[tuple[str, list[str]]] = []
        self.embed_requests: list[list[str]] = []

    def chat(self, request: ChatRequest, on_chunk=None) -> ChatResponse:
        _validate_chat_request(request)
        self.chat_requests.append(request)
        script = self._scripts.get(request.role)
        if not script:
            raise ProviderError(f"no chat script for role {request.role!r}")
        index = self._cursor.get(request.role, 0)
        if index >= len(script):
            if not self._cycle:
                raise ProviderError(f"chat script exhausted for role {request.role!r}")
            index = 0
        self._cursor[request.role] = index + 1
        text = script[index]
        if on_chunk is not None:
            step = self._stream_chunk_size
            for i in range(0, len(text), step):
                on_chunk(text[i : i + step])
        return ChatResponse(text=text, token_count=len(text.split()))

    def search(self, query: str, count: int = DEFAULT_SEARCH_COUNT) -> list[WebPage]:
        if count < 1:
            raise ValueError("search count must be >= 1")
        self.search_requests.append((query, count))
        if query in self._search:
            return list(self._search[query])[:count]
        if self._default_search is not None:
            return list(self._default_search)[:count]
        raise ProviderError(f"no scripted search results for query {query!r}")

    def rerank(self, query_with_context: str, documents: list[str]) -> list[float]:
        if not documents:
            raise ValueError("rerank requires at least one document")
        self.rerank_requests.append((query_with_context, list(documents)))
        if self._rerank_scores is None:
            raise ProviderError("no scripted rerank scores")
        if callable(self._rerank_scores):
            scores = list(self._rerank_scores(query_with_context, documents))
        else:
            batches = self._rerank_scores
            if self._rerank_cursor >= len(batches):
                if not self._cycle:
                    raise ProviderError("rerank score script exhausted")
                self._rerank_cursor = 0
            scores = list(batches[self._rerank_cursor])
            self._rerank_cursor += 1
        if len(scores) != len(documents):
            raise ProviderError(
                f"rerank returned {len(scores)} scores for {len(documents)} documents"
            )
        return scores

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("embed requires at least one text")
        self.embed_requests.append(list(texts))
        return hash_embed(texts)

    def now(self) -> float:
        self._clock += 0.001
        return self._clock


# ---------------------------------------------------------------------------
# Live HTTP client
# ---------------------------------------------------------------------------


@dataclass
class Endpoint:
    base_url: str
    model: str = ""
    api_key: str = ""


class LiveProviderSet:
    """HTTP clients speaking the documented minimal wire protocols.

    Chat uses the common chat-completion JSON shape (messages array,
    optional server-sent-event streaming); search/rerank/embeddings use
    plain JSON POST endpoints. Instances hold no per-call state and are
    safe to share across concurrent sessions.
    """

    def __init__(
        self,
        chat_endpoints: dict[str, Endpoint],
        search_endpoint: Endpoint | None = None,
        rerank_endpoint: Endpoint | None = None,
        embed_endpoint: Endpoint | None = None,
        timeout: float = DEFAULT_HTTP_TIMEOUT,
    ) -> None:
        self._chat = dict(chat_endpoints)
        self._search = search_endpoint
        self._rerank = rerank_endpoint
        self._embed = embed_endpoint
        self._timeout = timeout

    def _endpoint_for(self, role: str) -> Endpoint:
        if role not in self._chat:
            raise ProviderError(f"no chat endpoint configured for role {role!r}")
        return self._chat[role]

    def _post(self, endpoint: Endpoint, path: str, body: dict, stream: bool = False):
        headers = {"Content-Type": "application/json"}
        if endpoint.api_key:
            headers["Authorization"] = f"Bearer {endpoint.api_key}"
        url = endpoint.base_url.rstrip("/") + path
        try:
            response = requests.post(
                url, json=body, headers=headers, timeout=self._timeout, stream=stream
            )
        except requests.RequestException as exc:
            raise TransportError(f"POST {url} failed: {exc}") from exc
        if response.status_code // 100 != 2:
            raise ProviderError(
                f"POST {url} returned {response.status_code}: {response.text[:300]}"
            )
        return response

    def chat(self, request: ChatRequest, on_chunk=None) -> ChatResponse:
        _validate_chat_request(request)
        endpoint = self._endpoint_for(request.role)
        body = {
            "model": endpoint.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "stream": bool(request.stream and on_chunk is not None),
            **request.params.to_dict(),
        }
        response = self._post(endpoint, "/chat/completions", body, stream=body["stream"])
        if body["stream"]:
            return self._drain_sse(response, on_chunk)
        payload = response.json()
        choice = payload["choices"][0]
        text = choice["message"]["content"] or ""
        usage = payload.get("usage") or {}
        tokens = int(usage.get("completion_tokens") or len(text.split()))
        if on_chunk is not None:
            on_chunk(text)
        return ChatResponse(
            text=text,
            token_count=tokens,
            finish_reason=choice.get("finish_reason") or "stop",
        )

    @staticmethod
    def _drain_sse(response, on_chunk) -> ChatResponse:
        pieces: list[str] = []
        finish = "stop"
        for raw in response.iter_lines(decode_unicode=True):
            if not raw or not raw.startswith("data:"):
                continue
            data = raw[len("data:"):].strip()
            if data == "[DONE]":
                break
            event = json.loads(data)
            choice = event["choices"][0]
            delta = (choice.get("delta") or {}).get("content") or ""
            if delta:
                pieces.append(delta)
                if on_chunk is not None:
                    on_chunk(delta)
            finish = choice.get("finish_reason") or finish
        text = "".join(pieces)
        return ChatResponse(text=text, token_count=len(text.split()), finish_reason=finish)

    def search(self, query: str, count: int = DEFAULT_SEARCH_COUNT) -> list[WebPage]:
        if count < 1:
            raise ValueError("search count must be >= 1")
        if self._search is None:
            raise ProviderError("no search endpoint configured")
        payload = self._post(self._search, "/search", {"query": query, "count": count}).json()
        pages = []
        for hit in payload.get("results", []):
            pages.append(
                WebPage(
                    url=hit.get("url", ""),
                    title=hit.get("title", ""),
                    content=hit.get("content") or hit.get("snippet") or "",
                )
            )
        return pages

    def rerank(self, query_with_context: str, documents: list[str]) -> list[float]:
        if not documents:
            raise ValueError("rerank requires at least one document")
        if self._rerank is None:
            raise ProviderError("no rerank endpoint configured")
        body = {"query": query_with_context, "documents": list(documents)}
        scores = self._post(self._rerank, "/rerank", body).json().get("scores", [])
        if len(scores) != len(documents):
            raise ProviderError(
                f"rerank returned {len(scores)} scores for {len(documents)} documents"
            )
        return [float(s) for s in scores]

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("embed requires at least one text")
        if self._embed is None:
            raise ProviderError("no embeddings endpoint configured")
        vectors = self._post(self._embed, "/embeddings", {"texts": list(texts)}).json()
        return [[float(x) for x in v] for v in vectors.get("vectors", [])]

    def now(self) -> float:
        return time.monotonic()


# ---------------------------------------------------------------------------
# Record / replay
# ---------------------------------------------------------------------------


def _page_to_dict(page: WebPage) -> dict:
    return {"url": page.url, "title": page.title, "content": page.content}


def _page_from_dict(data: dict) -> WebPage:
    return WebPage(url=data["url"], title=data["title"], content=data["content"])


class RecordingProviderSet:
    """Pass-through wrapper that captures every exchange as a fixture entry."""

    def __init__(self, inner) -> None:
        self._inner = inner
        self.entries: list[dict] = []

    def _record(self, kind: str, digest: str, response) -> None:
        self.entries.append({"kind": kind, "digest": digest, "response": response})

    def chat(self, request: ChatRequest, on_chunk=None) -> ChatResponse:
        response = self._inner.chat(request, on_chunk=on_chunk)
        self._record(
            "chat",
            chat_digest(request),
            {
                "text": response.text,
                "token_count": response.token_count,
                "finish_reason": response.finish_reason,
            },
        )
        return response

    def search(self, query: str, count: int = DEFAULT_SEARCH_COUNT) -> list[WebPage]:
        pages = self._inner.search(query, count)
        self._record("search", _search_digest(query, count), [_page_to_dict(p) for p in pages])
        return pages

    def rerank(self, query_with_context: str, documents: list[str]) -> list[float]:
        scores = self._inner.rerank(query_with_context, documents)
        self._record("rerank", _rerank_digest(query_with_context, documents), scores)
        return scores

    def embed(self, texts: list[str]) -> list[list[float]]:
        vectors = self._inner.embed(texts)
        self._record("embed", _embed_digest(texts), vectors)
        return vectors

    def now(self) -> float:
        value = self._inner.now()
        self._record("clock", _CLOCK_DIGEST, value)
        return value

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for entry in self.entries:
                handle.write(json.dumps(entry, sort_keys=True) + "\n")


class ReplayProviderSet:
    """Replays a recorded fixture; any request drift is a hard error."""

    def __init__(self, entries: list[dict]) -> None:
        self._entries = list(entries)
        self._index = 0

    @classmethod
    def load(cls, path) -> "ReplayProviderSet":
        entries = []
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if line:
                    entries.append(json.loads(line))
        return cls(entries)

    def _next(self, kind: str, digest: str):
        if self._index >= len(self._entries):
            raise ReplayMismatchError(
                f"fixture exhausted: no entry for {kind} request {digest}"
            )
        entry = self._entries[self._index]
        if entry["kind"] != kind or entry["digest"] != digest:
            raise ReplayMismatchError(
                f"replay divergence at entry {self._index}: fixture has "
                f"{entry['kind']}:{entry['digest']}, request is {kind}:{digest}"
            )
        self._index += 1
        return entry["response"]

    def chat(self, request: ChatRequest, on_chunk=None) -> ChatResponse:
        _validate_chat_request(request)
        data = self._next("chat", chat_digest(request))
        response = ChatResponse(
            text=data["text"],
            token_count=data["token_count"],
            finish_reason=data["finish_reason"],
        )
        if on_chunk is not None and response.text:
            on_chunk(response.text)
        return response

    def search(self, query: str, count: int = DEFAULT_SEARCH_COUNT) -> list[WebPage]:
        data = self._next("search", _search_digest(query, count))
        return [_page_from_dict(d) for d in data]

    def rerank(self, query_with_context: str, documents: list[str]) -> list[float]:
        data = self._next("rerank", _rerank_digest(query_with_context, documents))
        return [float(s) for s in data]

    def embed(self, texts: list[str]) -> list[list[float]]:
        data = self._next("embed", _embed_digest(texts))
        return [[float(x) for x in v] for v in data]

    def now(self) -> float:
        return float(self._next("clock", _CLOCK_DIGEST))


class CountingProviderSet:
    """Session-local wrapper tallying provider calls by role/service."""

    def __init__(self, inner) -> None:
        self._inner = inner
        self.counts: Counter = Counter()

    def chat(self, request: ChatRequest, on_chunk=None) -> ChatResponse:
        self.counts[f"chat:{request.role}"] += 1
        return self._inner.chat(request, on_chunk=on_chunk)

    def search(self, query: str, count: int = DEFAULT_SEARCH_COUNT) -> list[WebPage]:
        self.counts["search"] += 1
        return self._inner.search(query, count)

    def rerank(self, query_with_context: str, documents: list[str]) -> list[float]:
        self.counts["rerank"] += 1
        return self._inner.rerank(query_with_context, documents)

    def embed(self, texts: list[str]) -> list[list[float]]:
        self.counts["embed"] += 1
        return self._inner.embed(texts)

    def now(self) -> float:
        return self._inner.now()
