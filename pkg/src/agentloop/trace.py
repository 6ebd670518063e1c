"""Ordered, persistent record of everything a reasoning session did.

Serialized as JSON lines: a header line with the schema version, session
id, question, and config snapshot, then one line per record in temporal
order, then a footer with per-provider call counts. Serialization is
deterministic so replayed sessions can be compared byte for byte.
"""

import json
from dataclasses import dataclass, field

from .markers import ToolKind

TRACE_SCHEMA_VERSION = 1


@dataclass
class GenerationSpan:
    text: str
    token_count: int


@dataclass
class ToolInvocation:
    kind: ToolKind
    query: str
    agent_response: str
    wall_time: float


@dataclass
class Injection:
    text: str


@dataclass
class FinalAnswer:
    text: str


TraceRecord = GenerationSpan | ToolInvocation | Injection | FinalAnswer


@dataclass
class SessionTrace:
    session_id: str
    question: str
    config_snapshot: dict
    records: list[TraceRecord] = field(default_factory=list)
    provider_calls: dict[str, int] = field(default_factory=dict)

    def add(self, record: TraceRecord) -> None:
        self.records.append(record)

    def tool_invocations(self) -> list[ToolInvocation]:
        return [r for r in self.records if isinstance(r, ToolInvocation)]

    def record_shape(self) -> list[str]:
        """Record type names in order; handy for asserting session shape."""
        return [type(r).__name__ for r in self.records]

    def serialize(self) -> str:
        lines = [
            json.dumps(
                {
                    "type": "session",
                    "version": TRACE_SCHEMA_VERSION,
                    "session_id": self.session_id,
                    "question": self.question,
                    "config": self.config_snapshot,
                },
                sort_keys=True,
            )
        ]
        for record in self.records:
            lines.append(json.dumps(_record_to_dict(record), sort_keys=True))
        lines.append(
            json.dumps(
                {"type": "provider_calls", "counts": dict(sorted(self.provider_calls.items()))},
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.serialize())

    @classmethod
    def deserialize(cls, text: str) -> "SessionTrace":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise ValueError("empty trace")
        header = json.loads(lines[0])
        if header.get("type") != "session":
            raise ValueError("trace must start with a session header line")
        if header.get("version") != TRACE_SCHEMA_VERSION:
            raise ValueError(f"unsupported trace version {header.get('version')!r}")
        trace = cls(
            session_id=header["session_id"],
            question=header["question"],
            config_snapshot=header["config"],
        )
        for line in lines[1:]:
            data = json.loads(line)
            if data["type"] == "provider_calls":
                trace.provider_calls = dict(data["counts"])
            else:
                trace.add(_record_from_dict(data))
        return trace

    @classmethod
    def load(cls, path) -> "SessionTrace":
        with open(path, encoding="utf-8") as handle:
            return cls.deserialize(handle.read())


def _record_to_dict(record: TraceRecord) -> dict:
    if isinstance(record, GenerationSpan):
        return {"type": "generation", "text": record.text, "token_count": record.token_count}
    if isinstance(record, ToolInvocation):
        return {
            "type": "tool",
            "kind": record.kind.value,
            "query": record.query,
            "response": record.agent_response,
            "wall_time": record.wall_time,
        }
    if isinstance(record, Injection):
        return {"type": "injection", "text": record.text}
    if isinstance(record, FinalAnswer):
        return {"type": "final", "text": record.text}
    raise TypeError(f"unknown trace record {record!r}")


def _record_from_dict(data: dict) -> TraceRecord:
    kind = data["type"]
    if kind == "generation":
        return GenerationSpan(text=data["text"], token_count=data["token_count"])
    if kind == "tool":
        return ToolInvocation(
            kind=ToolKind(data["kind"]),
            query=data["query"],
            agent_response=data["response"],
            wall_time=data["wall_time"],
        )
    if kind == "injection":
        return Injection(text=data["text"])
    if kind == "final":
        return FinalAnswer(text=data["text"])
    raise ValueError(f"unknown trace record type {kind!r}")
