"""Marker grammar for mid-stream agent invocation and result injection.

The reasoning model requests an agent by wrapping a query in a begin/end
marker pair; the orchestrator injects agent output wrapped in result
markers. The exact surface forms below are quoted verbatim in system
prompts, so they must never change silently.
"""

from enum import Enum


class ToolKind(Enum):
    WEB_SEARCH = "web_search"
    CODE = "code"
    MIND_MAP = "mind_map"


BEGIN_SEARCH = "<<BEGIN_SEARCH>>"
END_SEARCH = "<<END_SEARCH>>"
BEGIN_CODE = "<<BEGIN_CODE>>"
END_CODE = "<<END_CODE>>"
BEGIN_MIND = "<<BEGIN_MIND>>"
END_MIND = "<<END_MIND>>"
RESULT_OPEN = "<<RESULT>>"
RESULT_CLOSE = "<<END_RESULT>>"

BEGIN_MARKERS: dict[str, ToolKind] = {
    BEGIN_SEARCH: ToolKind.WEB_SEARCH,
    BEGIN_CODE: ToolKind.CODE,
    BEGIN_MIND: ToolKind.MIND_MAP,
}

END_MARKERS: dict[str, ToolKind] = {
    END_SEARCH: ToolKind.WEB_SEARCH,
    END_CODE: ToolKind.CODE,
    END_MIND: ToolKind.MIND_MAP,
}

BEGIN_FOR_KIND: dict[ToolKind, str] = {v: k for k, v in BEGIN_MARKERS.items()}
END_FOR_KIND: dict[ToolKind, str] = {v: k for k, v in END_MARKERS.items()}

ALL_MARKERS: tuple[str, ...] = (
    BEGIN_SEARCH,
    END_SEARCH,
    BEGIN_CODE,
    END_CODE,
    BEGIN_MIND,
    END_MIND,
    RESULT_OPEN,
    RESULT_CLOSE,
)

# Longest marker; an incremental scanner never needs to hold back more
# than len(longest) - 1 characters of a potential marker prefix.
MAX_MARKER_LEN = max(len(m) for m in ALL_MARKERS)


def render_tool_call(kind: ToolKind, query: str) -> str:
    """Serialize a tool call back to its marker form."""
    return f"{BEGIN_FOR_KIND[kind]}{query}{END_FOR_KIND[kind]}"


def escape_markers(text: str) -> str:
    """Neutralize marker occurrences inside text by doubling their angle brackets.

    Applied to agent output before result injection so the injected block's
    own delimiters stay unambiguous.
    """
    for marker in ALL_MARKERS:
        if marker in text:
            doubled = marker.replace("<<", "<<<<").replace(">>", ">>>>")
            text = text.replace(marker, doubled)
    return text
