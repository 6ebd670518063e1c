"""Web-search agent: breakdown, retrieval, rerank gate, per-query RAG, synthesis.

The loop refines queries up to three times, gated by the mean relevance of
the top ten reranked pages against a 0.7 threshold. Pages scoring strictly
above the threshold feed per-query answer extraction; a final call fuses
the answers into one snippet, prefixed with an uncertainty qualifier when
the gate never passed. Each stage can be toggled off independently.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction

from . import rag
from .backends import (
    ChatRequest,
    DEFAULT_SEARCH_COUNT,
    Message,
    ProviderError,
    WebPage,
)

logger = logging.getLogger(__name__)

RERANK_THRESHOLD = 0.7
GATE_TOP_N = 10
MAX_ITERATIONS = 3
MAX_REFINED_QUERIES = 5
PER_QUERY_TOP_K = 6

INSUFFICIENT_SOURCES = "insufficient sources"
SEARCH_FAILED = "web search failed; no results were retrieved"
LIMITED_PREFIX = "Given the limited knowledge retrieved"

SUFFICIENT = "sufficient"
LIMITED = "limited"


@dataclass
class SearchTask:
    original_query: str
    reasoning_context: str = ""


@dataclass
class SearchSettings:
    query_breakdown: bool = True
    rerank: bool = True
    knowledge_refinement: bool = False
    search_count: int = DEFAULT_SEARCH_COUNT


@dataclass
class ScoredPage:
    url: str
    title: str
    content: str
    score: float


@dataclass
class SearchOutcome:
    snippet: str
    confidence: str  # sufficient | limited
    iterations_used: int
    refined_queries: list[str] = field(default_factory=list)


def _query_with_context(task: SearchTask) -> str:
    if task.reasoning_context:
        return f"{task.original_query}\n\n{task.reasoning_context}"
    return task.original_query


def _parse_query_lines(reply: str) -> list[str]:
    queries = []
    for line in reply.splitlines():
        line = line.strip().lstrip("-*").strip()
        if line and line[0].isdigit():
            line = line.lstrip("0123456789").lstrip(".)").strip()
        if line and line not in queries:
            queries.append(line)
    return queries


def breakdown_query(
    task: SearchTask,
    providers,
    settings: SearchSettings | None = None,
    feedback: list[dict] | None = None,
) -> list[str]:
    """Rewrite the raw request into up to five search-engine-friendly queries.

    With the toggle off the original query passes through verbatim. On any
    provider trouble the original query is the fallback.
    """
    settings = settings or SearchSettings()
    if not settings.query_breakdown:
        return [task.original_query]

    lines = [
        "Rewrite the request below into one to five short, search-engine-"
        "optimized queries. Reply with one query per line and nothing else.",
        "",
        f"Request: {task.original_query}",
    ]
    if task.reasoning_context:
        lines.append(f"Context: {task.reasoning_context}")
    for round_info in feedback or []:
        lines.append(
            "These earlier queries retrieved insufficient results "
            f"(top relevance scores {round_info['top_scores']}):"
        )
        lines.extend(f"- {q}" for q in round_info["queries"])
        lines.append("Propose different or more specific queries.")
    request = ChatRequest(
        role="breakdown",
        messages=[Message(role="user", content="\n".join(lines))],
    )
    try:
        reply = providers.chat(request).text
    except ProviderError as exc:
        logger.warning("query breakdown failed, using original query: %s", exc)
        return [task.original_query]
    queries = _parse_query_lines(reply)[:MAX_REFINED_QUERIES]
    return queries or [task.original_query]


def gate_decision(scores: list[float]) -> bool:
    """Mean of the top min(10, n) scores, pass iff >= 0.7; no pages fail.

    The threshold comparison is inclusive, so the mean is taken in exact
    rational arithmetic over the scores' decimal forms; a mean of exactly
    0.7 must pass rather than fall to float rounding.
    """
    if not scores:
        return False
    top = sorted(scores, reverse=True)[: min(GATE_TOP_N, len(scores))]
    mean = sum(Fraction(str(s)) for s in top) / len(top)
    return mean >= Fraction(str(RERANK_THRESHOLD))


def rerank_and_gate(
    pages: list[WebPage],
    task: SearchTask,
    providers,
    settings: SearchSettings | None = None,
) -> tuple[list[ScoredPage], bool]:
    """Score pages against the original query plus context and apply the gate.

    Toggle off scores everything 1.0 and passes. A rerank provider failure
    scores everything 0.5, which the gate then fails on its own.
    """
    settings = settings or SearchSettings()
    if not pages:
        return [], False
    if not settings.rerank:
        scored = [ScoredPage(p.url, p.title, p.content, 1.0) for p in pages]
        scored.sort(key=lambda p: p.url)
        return scored, True

    documents = [f"{p.title}\n{p.content}" for p in pages]
    try:
        scores = providers.rerank(_query_with_context(task), documents)
    except ProviderError as exc:
        logger.warning("rerank failed, scoring 0.5 uniformly: %s", exc)
        scores = [0.5] * len(pages)
    scored = [
        ScoredPage(p.url, p.title, p.content, float(s)) for p, s in zip(pages, scores)
    ]
    scored.sort(key=lambda p: (-p.score, p.url))
    return scored, gate_decision([p.score for p in scored])


def extract_per_query(
    refined_query: str,
    pages: list[ScoredPage],
    task: SearchTask,
    providers,
    settings: SearchSettings | None = None,
) -> str:
    """RAG over the qualifying pages (score strictly above 0.7) for one query."""
    settings = settings or SearchSettings()
    qualifying = [p for p in pages if p.score > RERANK_THRESHOLD]
    if not qualifying:
        return INSUFFICIENT_SOURCES

    contents = {p.url: p.content for p in qualifying}
    if settings.knowledge_refinement:
        for page in qualifying:
            contents[page.url] = _refine_page(page, refined_query, providers)

    chunks = []
    for page in qualifying:
        chunks.extend(rag.chunk_text(page.url, contents[page.url]))
    hits = rag.retrieve_top_k(refined_query, chunks, PER_QUERY_TOP_K, providers) if chunks else []
    return rag.generate_grounded_answer(
        refined_query, hits, task.reasoning_context, providers, role="synthesis"
    )


def _refine_page(page: ScoredPage, refined_query: str, providers) -> str:
    prompt = (
        "Summarize the facts in this page that bear on the query.\n\n"
        f"Query: {refined_query}\n\nTitle: {page.title}\n\n{page.content}"
    )
    request = ChatRequest(role="synthesis", messages=[Message(role="user", content=prompt)])
    try:
        return providers.chat(request).text
    except ProviderError as exc:
        logger.warning("knowledge refinement failed for %s, keeping raw page: %s", page.url, exc)
        return page.content


def synthesize_snippet(
    per_query_answers: list[str],
    task: SearchTask,
    confidence: str,
    providers,
) -> str:
    """Fuse per-query answers into one snippet for reinjection.

    Limited confidence gets an explicit uncertainty prefix so the reasoning
    model treats the snippet as tentative.
    """
    if not per_query_answers:
        raise ValueError("need at least one per-query answer")
    lines = [
        "Combine the following findings into one cohesive snippet answering "
        "the request. Stay factual and brief.",
        "",
        f"Request: {task.original_query}",
    ]
    if task.reasoning_context:
        lines.append(f"Context: {task.reasoning_context}")
    lines.append("")
    lines.extend(f"- {answer}" for answer in per_query_answers)
    request = ChatRequest(role="synthesis", messages=[Message(role="user", content="\n".join(lines))])
    try:
        snippet = providers.chat(request).text
    except ProviderError as exc:
        logger.warning("snippet synthesis failed, concatenating answers: %s", exc)
        snippet = "\n\n".join(per_query_answers)
    if confidence == LIMITED and not snippet.startswith(LIMITED_PREFIX):
        snippet = f"{LIMITED_PREFIX}, {snippet}"
    return snippet


def run_search(
    task: SearchTask,
    providers,
    settings: SearchSettings | None = None,
) -> SearchOutcome:
    """Full threshold-gated search loop.

    Each iteration: breakdown, fetch pages per refined query, dedupe by
    url, rerank, gate. A failed gate feeds the queries and their scores
    back into breakdown, at most three iterations in total.
    """
    if not task.original_query:
        raise ValueError("original_query must be nonempty")
    settings = settings or SearchSettings()

    feedback: list[dict] = []
    refined: list[str] = []
    scored: list[ScoredPage] = []
    gate = False
    iterations = 0

    for iteration in range(1, MAX_ITERATIONS + 1):
        iterations = iteration
        refined = breakdown_query(task, providers, settings, feedback or None)
        pages: list[WebPage] = []
        seen: set[str] = set()
        try:
            for query in refined:
                for page in providers.search(query, settings.search_count):
                    if page.url and page.url not in seen:
                        seen.add(page.url)
                        pages.append(page)
        except ProviderError as exc:
            logger.warning("search provider failed: %s", exc)
            return SearchOutcome(
                snippet=f"{LIMITED_PREFIX}, nothing can be reported: {SEARCH_FAILED}",
                confidence=LIMITED,
                iterations_used=iterations,
                refined_queries=refined,
            )
        scored, gate = rerank_and_gate(pages, task, providers, settings)
        if gate:
            break
        feedback.append(
            {
                "queries": list(refined),
                "top_scores": [round(p.score, 3) for p in scored[:GATE_TOP_N]],
            }
        )

    confidence = SUFFICIENT if gate else LIMITED
    answers = [
        extract_per_query(query, scored, task, providers, settings) for query in refined
    ]
    snippet = synthesize_snippet(answers, task, confidence, providers)
    return SearchOutcome(
        snippet=snippet,
        confidence=confidence,
        iterations_used=iterations,
        refined_queries=list(refined),
    )
