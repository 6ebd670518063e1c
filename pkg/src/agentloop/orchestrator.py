"""Session loop: generate, halt on tool markers, dispatch, reinject, repeat.

One session answers one question. The reasoning model is taught the marker
grammar through its system prompt; whenever it emits a tool call the loop
pauses, routes the query to the right agent with reasoning context chosen
by the memory mode, appends the agent's output as a result block on the
assistant turn, and resumes generation. Budgets bound tool calls and
generated tokens, and everything lands in the session trace.
"""

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field

from . import codeagent, mindmap, websearch
from .backends import (
    ChatRequest,
    CountingProviderSet,
    GenerationParams,
    Message,
    ProviderError,
    TransportError,
)
from .codeagent import CodeExecSettings, CodeRequest
from .markers import (
    BEGIN_CODE,
    BEGIN_MIND,
    BEGIN_SEARCH,
    END_CODE,
    END_MIND,
    END_SEARCH,
    RESULT_CLOSE,
    RESULT_OPEN,
    ToolKind,
    escape_markers,
    render_tool_call,
)
from .stream_parser import TextEvent, ToolCallEvent, parse_text
from .trace import FinalAnswer, GenerationSpan, Injection, SessionTrace, ToolInvocation
from .websearch import SearchSettings, SearchTask

logger = logging.getLogger(__name__)

MEMORY_MODES = ("none", "raw", "mindmap")
RAW_MEMORY_TOKEN_BUDGET = 4096
NO_RESULT_SENTINEL = "[no result]"
FINAL_TURN_PROMPT = (
    "Answer now without using any tools. Give your best final answer "
    "from what you already know."
)
FINAL_TURN_MAX_TOKENS = 1024

MAX_TRANSPORT_RETRIES = 2
RETRY_BACKOFF_SECONDS = 0.25

COMPLETED = "completed"
BUDGET_EXHAUSTED = "budget_exhausted"
PROVIDER_ERROR = "provider_error"

_TOOL_NAMES = {
    ToolKind.WEB_SEARCH: "web search",
    ToolKind.CODE: "code",
    ToolKind.MIND_MAP: "mind-map",
}


@dataclass
class WebSearchConfig:
    query_breakdown: bool = True
    rerank: bool = True
    mindmap_context: bool = True
    knowledge_refinement: bool = False
    search_count: int = 20


@dataclass
class SessionConfig:
    params: GenerationParams = field(default_factory=GenerationParams)
    web_search: bool = True
    code: bool = True
    mind_map: bool = True
    memory_mode: str = "mindmap"
    max_tool_calls: int = 10
    websearch: WebSearchConfig = field(default_factory=WebSearchConfig)
    code_exec: CodeExecSettings = field(default_factory=CodeExecSettings)
    provider_models: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        p = self.params
        if p.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if p.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < p.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if p.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.max_tool_calls < 0:
            raise ValueError("max_tool_calls must be >= 0")
        if self.memory_mode not in MEMORY_MODES:
            raise ValueError(f"memory_mode must be one of {MEMORY_MODES}")

    def enabled(self, kind: ToolKind) -> bool:
        return {
            ToolKind.WEB_SEARCH: self.web_search,
            ToolKind.CODE: self.code,
            ToolKind.MIND_MAP: self.mind_map,
        }[kind]

    def snapshot(self) -> dict:
        return {
            "generation": self.params.to_dict(),
            "tools": {
                "web_search": self.web_search,
                "code": self.code,
                "mind_map": self.mind_map,
            },
            "memory_mode": self.memory_mode,
            "max_tool_calls": self.max_tool_calls,
            "websearch": {
                "query_breakdown": self.websearch.query_breakdown,
                "rerank": self.websearch.rerank,
                "mindmap_context": self.websearch.mindmap_context,
                "knowledge_refinement": self.websearch.knowledge_refinement,
                "search_count": self.websearch.search_count,
            },
            "code_exec": {
                "interpreter": list(self.code_exec.interpreter),
                "timeout_seconds": self.code_exec.timeout_seconds,
                "output_cap_bytes": self.code_exec.output_cap_bytes,
            },
            "provider_models": dict(sorted(self.provider_models.items())),
        }

    @classmethod
    def from_snapshot(cls, data: dict) -> "SessionConfig":
        config = cls(
            params=GenerationParams(**data["generation"]),
            web_search=data["tools"]["web_search"],
            code=data["tools"]["code"],
            mind_map=data["tools"]["mind_map"],
            memory_mode=data["memory_mode"],
            max_tool_calls=data["max_tool_calls"],
            websearch=WebSearchConfig(**data["websearch"]),
            code_exec=CodeExecSettings(**data["code_exec"]),
            provider_models=dict(data.get("provider_models", {})),
        )
        config.validate()
        return config


@dataclass
class SessionResult:
    final_answer: str
    trace: SessionTrace
    termination: str  # completed | budget_exhausted | provider_error


def build_system_prompt(config: SessionConfig) -> str:
    lines = [
        "You are a careful reasoning assistant. Think step by step.",
    ]
    if config.web_search:
        lines.append(
            f"To search the web, emit {BEGIN_SEARCH}your query{END_SEARCH} and stop."
        )
    if config.code:
        lines.append(
            f"To delegate a computation, emit {BEGIN_CODE}what to compute{END_CODE} and stop."
        )
    if config.mind_map:
        lines.append(
            "To query your structured memory of this reasoning session, emit "
            f"{BEGIN_MIND}your question{END_MIND} and stop."
        )
    if config.web_search or config.code or config.mind_map:
        lines.append(
            "Each tool result will be appended to your reasoning wrapped in "
            f"{RESULT_OPEN}...{RESULT_CLOSE}. Request at most one tool at a time."
        )
    lines.append(
        "When you have everything you need, state the final answer directly "
        "with no tool markers."
    )
    return "\n".join(lines)


def format_injection(agent_text: str) -> str:
    """Wrap agent output for reinjection into the reasoning chain."""
    if not agent_text.strip():
        agent_text = NO_RESULT_SENTINEL
    return f"{RESULT_OPEN}{escape_markers(agent_text)}{RESULT_CLOSE}"


def refusal_text(reason: str) -> str:
    return f"Tool call refused: {reason}"


def raw_memory_context(spans: list[str], budget: int = RAW_MEMORY_TOKEN_BUDGET) -> str:
    """Most recent generation spans first, truncated to a whitespace-token budget."""
    tokens: list[str] = []
    for span in reversed(spans):
        tokens.extend(span.split())
        if len(tokens) >= budget:
            break
    return " ".join(tokens[:budget])


def dispatch_tool_call(
    event: ToolCallEvent,
    config: SessionConfig,
    providers,
    graph: mindmap.KnowledgeGraph,
    user_query: str,
    spans: list[str] | None = None,
) -> str:
    """Route one tool call to its agent; returns the text to inject.

    Disabled tools get a fixed refusal; agent failures come back as error
    text so the reasoning chain can carry on.
    """
    kind = event.kind
    if not config.enabled(kind):
        return refusal_text(f"the {_TOOL_NAMES[kind]} tool is disabled in this session")

    spans = spans or []

    def memory_context() -> str:
        if config.memory_mode == "mindmap":
            return mindmap.synthesize_context(graph, providers)
        if config.memory_mode == "raw":
            return raw_memory_context(spans)
        return ""

    try:
        if kind is ToolKind.WEB_SEARCH:
            context = memory_context() if config.websearch.mindmap_context else ""
            settings = SearchSettings(
                query_breakdown=config.websearch.query_breakdown,
                rerank=config.websearch.rerank,
                knowledge_refinement=config.websearch.knowledge_refinement,
                search_count=config.websearch.search_count,
            )
            outcome = websearch.run_search(
                SearchTask(original_query=event.query, reasoning_context=context),
                providers,
                settings,
            )
            return outcome.snippet
        if kind is ToolKind.CODE:
            return codeagent.run_code_task(
                CodeRequest(
                    code_message=event.query,
                    reasoning_context=memory_context(),
                    user_query=user_query,
                ),
                providers,
                config.code_exec,
            )
        return mindmap.query_graph(graph, event.query, providers)
    except (ProviderError, codeagent.ConfigurationError) as exc:
        logger.warning("%s agent failed: %s", _TOOL_NAMES[kind], exc)
        return f"The {_TOOL_NAMES[kind]} agent failed: {exc}"


def _default_session_id(question: str, config: SessionConfig) -> str:
    blob = json.dumps([question, config.snapshot()], sort_keys=True)
    return "s-" + hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


class _SessionRunner:
    def __init__(self, question: str, config: SessionConfig, providers, session_id: str):
        self.question = question
        self.config = config
        self.providers = CountingProviderSet(providers)
        self.graph = mindmap.KnowledgeGraph()
        self.spans: list[str] = []
        self.assistant_text = ""
        self.tokens_used = 0
        self.tool_calls_used = 0
        self.trace = SessionTrace(
            session_id=session_id,
            question=question,
            config_snapshot=config.snapshot(),
        )

    def _finish(self, answer: str, termination: str) -> SessionResult:
        self.trace.provider_calls = dict(sorted(self.providers.counts.items()))
        return SessionResult(final_answer=answer, trace=self.trace, termination=termination)

    def _messages(self, extra_user: str | None = None) -> list[Message]:
        messages = [
            Message(role="system", content=build_system_prompt(self.config)),
            Message(role="user", content=self.question),
        ]
        if self.assistant_text:
            messages.append(Message(role="assistant", content=self.assistant_text))
        if extra_user is not None:
            messages.append(Message(role="user", content=extra_user))
        return messages

    def _generate(self, max_tokens: int, extra_user: str | None = None):
        request = ChatRequest(
            role="reasoning",
            messages=self._messages(extra_user),
            params=self.config.params.with_max_tokens(max_tokens),
        )
        for attempt in range(MAX_TRANSPORT_RETRIES + 1):
            try:
                return self.providers.chat(request)
            except TransportError as exc:
                if attempt == MAX_TRANSPORT_RETRIES:
                    raise
                delay = RETRY_BACKOFF_SECONDS * (2 ** attempt)
                logger.warning("transport error, retrying in %.2fs: %s", delay, exc)
                time.sleep(delay)
        raise AssertionError("unreachable")

    @staticmethod
    def _split_on_first_call(events, raw_text: str) -> tuple[str, ToolCallEvent | None]:
        """Text kept this turn and the first tool call, if any.

        Generation after the first call is discarded; the kept text ends
        with the call re-serialized in marker form so the conversation
        remains exact.
        """
        prefix: list[str] = []
        for event in events:
            if isinstance(event, ToolCallEvent):
                return "".join(prefix) + render_tool_call(event.kind, event.query), event
            if isinstance(event, TextEvent):
                prefix.append(event.text)
        return raw_text, None

    def _update_memory(self, span_text: str) -> None:
        if self.config.memory_mode != "mindmap" or not span_text.strip():
            return
        delta = mindmap.extract_graph_delta(span_text, self.graph, self.providers)
        mindmap.merge_delta(self.graph, delta)

    def _budget_exhausted(self) -> SessionResult:
        max_tokens = min(FINAL_TURN_MAX_TOKENS, self.config.params.max_tokens)
        try:
            response = self._generate(max_tokens, extra_user=FINAL_TURN_PROMPT)
        except ProviderError as exc:
            logger.warning("best-effort final turn failed: %s", exc)
            return self._finish("", BUDGET_EXHAUSTED)
        self.trace.add(GenerationSpan(text=response.text, token_count=response.token_count))
        return self._finish(response.text.strip(), BUDGET_EXHAUSTED)

    def run(self) -> SessionResult:
        try:
            while True:
                remaining = self.config.params.max_tokens - self.tokens_used
                if remaining <= 0:
                    return self._budget_exhausted()
                response = self._generate(remaining)
                self.tokens_used += max(1, response.token_count)

                events = parse_text(response.text)
                kept, call = self._split_on_first_call(events, response.text)
                self.trace.add(GenerationSpan(text=kept, token_count=response.token_count))
                self.spans.append(kept)

                if call is None:
                    answer = kept.strip()
                    self.trace.add(FinalAnswer(text=answer))
                    return self._finish(answer, COMPLETED)

                self._update_memory(kept)

                if not self.config.enabled(call.kind):
                    injected = refusal_text(
                        f"the {_TOOL_NAMES[call.kind]} tool is disabled in this session"
                    )
                elif self.tool_calls_used >= self.config.max_tool_calls:
                    injected = refusal_text("the tool-call budget is exhausted")
                else:
                    started = self.providers.now()
                    injected = dispatch_tool_call(
                        call, self.config, self.providers, self.graph,
                        self.question, self.spans,
                    )
                    wall_time = self.providers.now() - started
                    self.tool_calls_used += 1
                    self.trace.add(
                        ToolInvocation(
                            kind=call.kind,
                            query=call.query,
                            agent_response=injected,
                            wall_time=wall_time,
                        )
                    )

                injection = format_injection(injected)
                self.trace.add(Injection(text=injection))
                self.assistant_text += kept + injection
        except ProviderError as exc:
            logger.warning("session failed on provider error: %s", exc)
            return self._finish("", PROVIDER_ERROR)


def run_session(
    question: str,
    config: SessionConfig,
    providers,
    session_id: str | None = None,
) -> SessionResult:
    """Answer one question end to end, recording the full trace.

    The providers object supplies every external service; pass mock or
    replay providers for fully offline, deterministic sessions.
    """
    if not question:
        raise ValueError("question must be nonempty")
    config.validate()
    runner = _SessionRunner(
        question, config, providers, session_id or _default_session_id(question, config)
    )
    return runner.run()
