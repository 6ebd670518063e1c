"""Shared retrieval core: chunking, embeddings, similarity search, grounded answers.

Used by the web-search agent (per-query extraction) and the knowledge-graph
memory (graph query). Embeddings come from the provider set; the
deterministic bag-of-words hash embedding below backs the mock provider so
retrieval results are hand-checkable.
"""

import re
import zlib
from dataclasses import dataclass

import numpy as np

DEFAULT_CHUNK_SIZE = 512
DEFAULT_CHUNK_OVERLAP = 64
EMBED_DIM = 256

ANSWER_FAILED = "[answer generation failed]"

_TERM_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    index: int
    text: str


@dataclass(frozen=True)
class RetrievalHit:
    chunk: Chunk
    similarity: float


def hash_embed(texts: list[str]) -> list[list[float]]:
    """Deterministic embedding: dimension i counts terms whose stable hash is i.

    L2-normalized; a text with no terms keeps the zero vector (and scores
    similarity 0 against everything).
    """
    vectors = []
    for text in texts:
        vec = np.zeros(EMBED_DIM)
        for term in _TERM_RE.findall(text.lower()):
            vec[zlib.crc32(term.encode("utf-8")) % EMBED_DIM] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        vectors.append(vec.tolist())
    return vectors


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def chunk_text(
    doc_id: str,
    text: str,
    size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_CHUNK_OVERLAP,
) -> list[Chunk]:
    """Sliding window over whitespace tokens, advancing by size - overlap.

    The final partial window is kept if nonempty, so every token lands in
    at least one chunk.
    """
    if not size > overlap >= 0:
        raise ValueError("require size > overlap >= 0")
    tokens = text.split()
    if not tokens:
        return []
    step = size - overlap
    chunks: list[Chunk] = []
    start = 0
    while True:
        window = tokens[start : start + size]
        chunks.append(Chunk(doc_id=doc_id, index=len(chunks), text=" ".join(window)))
        if start + size >= len(tokens):
            break
        start += step
    return chunks


def retrieve_top_k(query: str, chunks: list[Chunk], k: int, providers) -> list[RetrievalHit]:
    """Embed query and chunks, rank by cosine similarity.

    Ties break by (doc_id, index) ascending so output is deterministic.
    Fewer than k chunks returns them all.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not chunks:
        return []
    vectors = providers.embed([query] + [c.text for c in chunks])
    query_vec = vectors[0]
    hits = [
        RetrievalHit(chunk=c, similarity=cosine_similarity(query_vec, v))
        for c, v in zip(chunks, vectors[1:])
    ]
    hits.sort(key=lambda h: (-h.similarity, h.chunk.doc_id, h.chunk.index))
    return hits[:k]


def generate_grounded_answer(
    query: str,
    hits: list[RetrievalHit],
    context: str,
    providers,
    role: str = "synthesis",
) -> str:
    """One provider call answering the query from the retrieved sources."""
    from .backends import ChatRequest, Message, ProviderError

    lines = [
        "Answer the question using the numbered sources below.",
        "Be concise and state only what the sources support.",
    ]
    if context:
        lines += ["", "Reasoning context:", context]
    lines += ["", f"Question: {query}", ""]
    if hits:
        lines.append("Sources:")
        for i, hit in enumerate(hits, start=1):
            lines.append(f"[{i}] ({hit.chunk.doc_id}#{hit.chunk.index}) {hit.chunk.text}")
    else:
        lines.append(
            "No sources are available; answer from the reasoning context alone "
            "and say so if you cannot."
        )
    request = ChatRequest(
        role=role,
        messages=[Message(role="user", content="\n".join(lines))],
    )
    try:
        return providers.chat(request).text
    except ProviderError:
        return ANSWER_FAILED
