"""Tool-augmented reasoning sessions.

A reasoning model that can pause mid-generation to call a web-search
agent, a code agent, and a knowledge-graph memory agent, with every
external service behind replayable provider interfaces so whole sessions
run deterministically offline.
"""

from .backends import (
    ChatRequest,
    ChatResponse,
    Endpoint,
    GenerationParams,
    LiveProviderSet,
    Message,
    MockProviderSet,
    ProviderError,
    RecordingProviderSet,
    ReplayMismatchError,
    ReplayProviderSet,
    TransportError,
    WebPage,
)
from .codeagent import (
    CodeExecSettings,
    CodeRequest,
    ExecutionResult,
    build_code_request,
    execute_sandboxed,
    run_code_task,
)
from .markers import ToolKind
from .metrics import entity_recall, mc_accuracy, rouge_l, rouge_n
from .mindmap import (
    KnowledgeGraph,
    detect_communities,
    extract_graph_delta,
    merge_delta,
    query_graph,
    synthesize_context,
)
from .orchestrator import (
    SessionConfig,
    SessionResult,
    WebSearchConfig,
    dispatch_tool_call,
    format_injection,
    run_session,
)
from .rag import chunk_text, generate_grounded_answer, hash_embed, retrieve_top_k
from .stream_parser import (
    ParseErrorEvent,
    StreamEndEvent,
    StreamParser,
    TextEvent,
    ToolCallEvent,
    parse_text,
)
from .trace import SessionTrace
from .websearch import (
    SearchOutcome,
    SearchSettings,
    SearchTask,
    run_search,
)

__version__ = "0.1.0"

__all__ = [
    "ChatRequest",
    "ChatResponse",
    "CodeExecSettings",
    "CodeRequest",
    "Endpoint",
    "ExecutionResult",
    "GenerationParams",
    "KnowledgeGraph",
    "LiveProviderSet",
    "Message",
    "MockProviderSet",
    "ParseErrorEvent",
    "ProviderError",
    "RecordingProviderSet",
    "ReplayMismatchError",
    "ReplayProviderSet",
    "SearchOutcome",
    "SearchSettings",
    "SearchTask",
    "SessionConfig",
    "SessionResult",
    "SessionTrace",
    "StreamEndEvent",
    "StreamParser",
    "TextEvent",
    "ToolCallEvent",
    "ToolKind",
    "TransportError",
    "WebPage",
    "WebSearchConfig",
    "build_code_request",
    "chunk_text",
    "detect_communities",
    "dispatch_tool_call",
    "entity_recall",
    "execute_sandboxed",
    "extract_graph_delta",
    "format_injection",
    "generate_grounded_answer",
    "hash_embed",
    "mc_accuracy",
    "merge_delta",
    "parse_text",
    "query_graph",
    "retrieve_top_k",
    "rouge_l",
    "rouge_n",
    "run_code_task",
    "run_search",
    "run_session",
    "synthesize_context",
]
