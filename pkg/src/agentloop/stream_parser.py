"""Incremental scanner for tool-call markers in a model output stream.

Feed arbitrary text chunks; the parser emits text spans, tool calls, and
recoverable errors in stream order. Markers may be split across chunk
boundaries. The emitted event list depends only on the concatenated
stream content, never on how it was chunked.
"""

from dataclasses import dataclass

from .markers import (
    BEGIN_FOR_KIND,
    BEGIN_MARKERS,
    END_MARKERS,
    ToolKind,
)

# A tool call buffered past this many characters is force-closed; bounds
# memory when the model babbles inside an open call.
MAX_QUERY_CHARS = 16 * 1024

_SCAN_MARKERS = tuple(BEGIN_MARKERS) + tuple(END_MARKERS)
_END_ONLY = tuple(END_MARKERS)


@dataclass(frozen=True)
class TextEvent:
    text: str


@dataclass(frozen=True)
class ToolCallEvent:
    kind: ToolKind
    query: str


@dataclass(frozen=True)
class ParseErrorEvent:
    """Recoverable stream malformation; scanning resumes at the next marker."""

    reason: str
    kind: ToolKind | None = None
    partial_query: str | None = None


@dataclass(frozen=True)
class StreamEndEvent:
    pass


ParseEvent = TextEvent | ToolCallEvent | ParseErrorEvent | StreamEndEvent


def _find_earliest(buf: str, markers: tuple[str, ...]) -> tuple[int, str | None]:
    best_pos, best = -1, None
    for marker in markers:
        pos = buf.find(marker)
        if pos != -1 and (best_pos == -1 or pos < best_pos):
            best_pos, best = pos, marker
    return best_pos, best


def _partial_marker_suffix(buf: str, markers: tuple[str, ...]) -> int:
    """Length of the longest buffer suffix that is a proper prefix of a marker."""
    limit = min(len(buf), max(len(m) for m in markers) - 1)
    for take in range(limit, 0, -1):
        tail = buf[-take:]
        if any(m.startswith(tail) for m in markers):
            return take
    return 0


class StreamParser:
    """Single-use incremental parser; one instance per generation stream."""

    def __init__(self) -> None:
        self._buf = ""            # unscanned input (may end in a partial marker)
        self._text_pending = ""   # confirmed text awaiting its span boundary
        self._open_kind: ToolKind | None = None
        self._query = ""          # confirmed query content of the open call
        self._finalized = False

    def feed(self, chunk: str) -> list[ParseEvent]:
        if self._finalized:
            raise RuntimeError("feed() after finalize()")
        self._buf += chunk
        return self._scan()

    def finalize(self) -> list[ParseEvent]:
        """Flush buffered state and close the stream."""
        if self._finalized:
            raise RuntimeError("finalize() called twice")
        events = self._scan()
        if self._open_kind is not None:
            events.append(
                ParseErrorEvent(
                    reason="stream ended inside an open tool call",
                    kind=self._open_kind,
                    partial_query=self._query + self._buf,
                )
            )
        else:
            leftover = self._text_pending + self._buf
            if leftover:
                events.append(TextEvent(leftover))
        self._buf = ""
        self._text_pending = ""
        self._query = ""
        self._open_kind = None
        self._finalized = True
        events.append(StreamEndEvent())
        return events

    # -- scanning -----------------------------------------------------------

    def _scan(self) -> list[ParseEvent]:
        events: list[ParseEvent] = []
        while True:
            if self._open_kind is None:
                if not self._scan_text(events):
                    break
            else:
                if not self._scan_call(events):
                    break
        return events

    def _flush_text(self, events: list[ParseEvent]) -> None:
        if self._text_pending:
            events.append(TextEvent(self._text_pending))
            self._text_pending = ""

    def _scan_text(self, events: list[ParseEvent]) -> bool:
        pos, marker = _find_earliest(self._buf, _SCAN_MARKERS)
        if marker is None:
            hold = _partial_marker_suffix(self._buf, _SCAN_MARKERS)
            keep = len(self._buf) - hold
            self._text_pending += self._buf[:keep]
            self._buf = self._buf[keep:]
            return False
        self._text_pending += self._buf[:pos]
        self._buf = self._buf[pos + len(marker):]
        if marker in BEGIN_MARKERS:
            self._flush_text(events)
            self._open_kind = BEGIN_MARKERS[marker]
            self._query = ""
        else:
            # End marker with no matching begin: report it, keep its
            # characters in the text flow, and carry on.
            self._flush_text(events)
            events.append(
                ParseErrorEvent(
                    reason=f"end marker {marker} without a matching begin marker",
                    kind=END_MARKERS[marker],
                )
            )
            self._text_pending = marker
        return True

    def _scan_call(self, events: list[ParseEvent]) -> bool:
        assert self._open_kind is not None
        # Begin markers inside an open call are literal query text; only end
        # markers terminate the scan.
        pos, marker = _find_earliest(self._buf, _END_ONLY)
        if marker is None:
            hold = _partial_marker_suffix(self._buf, _END_ONLY)
            take = len(self._buf) - hold
            self._query += self._buf[:take]
            self._buf = self._buf[take:]
            if len(self._query) > MAX_QUERY_CHARS:
                events.append(self._force_close())
                return True
            return False

        candidate = self._query + self._buf[:pos]
        if len(candidate) > MAX_QUERY_CHARS:
            # The length limit tripped at a stream position before this
            # marker; rescan everything past the limit, marker included.
            self._query = candidate
            self._buf = self._buf[pos:]
            events.append(self._force_close())
            return True

        kind = self._open_kind
        self._buf = self._buf[pos + len(marker):]
        if END_MARKERS[marker] is kind:
            events.append(ToolCallEvent(kind, candidate))
        else:
            events.append(TextEvent(BEGIN_FOR_KIND[kind] + candidate))
            events.append(
                ParseErrorEvent(
                    reason=(
                        f"end marker {marker} does not match the open "
                        f"{BEGIN_FOR_KIND[kind]} call"
                    ),
                    kind=kind,
                    partial_query=candidate,
                )
            )
            self._text_pending = marker
        self._open_kind = None
        self._query = ""
        return True

    def _force_close(self) -> ParseErrorEvent:
        """Abort the open call at exactly the buffering limit; rescan the rest."""
        error = ParseErrorEvent(
            reason=f"tool call exceeded {MAX_QUERY_CHARS} buffered characters",
            kind=self._open_kind,
            partial_query=self._query[:MAX_QUERY_CHARS],
        )
        self._buf = self._query[MAX_QUERY_CHARS:] + self._buf
        self._open_kind = None
        self._query = ""
        return error


def parse_text(text: str) -> list[ParseEvent]:
    """One-shot parse of a complete stream."""
    parser = StreamParser()
    events = parser.feed(text)
    events.extend(parser.finalize())
    return events
