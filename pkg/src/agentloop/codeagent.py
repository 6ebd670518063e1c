"""Coding agent: delegate code writing to a coding model, execute it, report in prose.

The coding model sees a fixed request template, returns a fenced code
block, and the block runs in an empty scratch directory under a wall-clock
timeout with bounded output capture. A failing program earns one repair
round. The final answer back to the reasoning chain is always natural
language, produced by a second model call over the execution evidence.
"""

import logging
import re
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .backends import ChatRequest, Message, ProviderError

logger = logging.getLogger(__name__)

CODE_REQUEST_TEMPLATE = (
    "Write code to perform {code_message} given the context "
    "{reasoning_context} to answer the query {user_query}."
)
NL_INSTRUCTION = "Always return your output in natural language."

TIMEOUT_GRACE_SECONDS = 1.0
_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


class ConfigurationError(Exception):
    """The execution environment is misconfigured (e.g. missing interpreter)."""


@dataclass
class CodeRequest:
    code_message: str
    reasoning_context: str = ""
    user_query: str = ""


@dataclass
class ExecutionResult:
    stdout: str
    stderr: str
    exit_status: int
    duration: float
    timed_out: bool


@dataclass
class CodeExecSettings:
    interpreter: list[str] = field(default_factory=lambda: ["python3"])
    timeout_seconds: float = 30.0
    output_cap_bytes: int = 64 * 1024


def build_code_request(request: CodeRequest) -> str:
    """Instantiate the fixed request template plus the natural-language rule."""
    if not request.code_message:
        raise ValueError("code_message must be nonempty")
    filled = CODE_REQUEST_TEMPLATE.format(
        code_message=request.code_message,
        reasoning_context=request.reasoning_context,
        user_query=request.user_query,
    )
    return f"{filled}\n{NL_INSTRUCTION}"


def extract_code_block(text: str) -> str | None:
    """Largest fenced code block wins; None when there is no fence."""
    blocks = _FENCE_RE.findall(text)
    if not blocks:
        return None
    return max(blocks, key=len)


def _truncate(data: str | bytes | None, cap: int) -> str:
    if data is None:
        return ""
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    return data[:cap]


def execute_sandboxed(code: str, settings: CodeExecSettings | None = None) -> ExecutionResult:
    """Run code in a fresh empty directory with a hard wall-clock timeout.

    Output capture is capped per stream. This is process-level isolation
    only; run the whole service in a container for real confinement.
    """
    settings = settings or CodeExecSettings()
    with tempfile.TemporaryDirectory(prefix="agentloop-exec-") as workdir:
        program = Path(workdir) / "main.py"
        program.write_text(code, encoding="utf-8")
        command = list(settings.interpreter) + [str(program)]
        started = time.monotonic()
        try:
            completed = subprocess.run(
                command,
                cwd=workdir,
                capture_output=True,
                timeout=settings.timeout_seconds,
            )
        except FileNotFoundError as exc:
            raise ConfigurationError(
                f"interpreter not found: {settings.interpreter!r}"
            ) from exc
        except subprocess.TimeoutExpired as exc:
            return ExecutionResult(
                stdout=_truncate(exc.stdout, settings.output_cap_bytes),
                stderr=_truncate(exc.stderr, settings.output_cap_bytes),
                exit_status=-9,
                duration=time.monotonic() - started,
                timed_out=True,
            )
        return ExecutionResult(
            stdout=_truncate(completed.stdout, settings.output_cap_bytes),
            stderr=_truncate(completed.stderr, settings.output_cap_bytes),
            exit_status=completed.returncode,
            duration=time.monotonic() - started,
            timed_out=False,
        )


def _describe_execution(result: ExecutionResult) -> str:
    status = "timed out" if result.timed_out else f"exited with status {result.exit_status}"
    return (
        f"The program {status}.\n"
        f"stdout:\n{result.stdout or '(empty)'}\n"
        f"stderr:\n{result.stderr or '(empty)'}"
    )


def run_code_task(
    request: CodeRequest,
    providers,
    settings: CodeExecSettings | None = None,
    execution_log: list[ExecutionResult] | None = None,
) -> str:
    """Full delegation round: prompt, execute, optionally repair once, report.

    At most two executions ever happen. Pass an execution_log list to
    observe them. Provider errors propagate; the caller decides how to
    reinject them.
    """
    settings = settings or CodeExecSettings()
    prompt = build_code_request(request)
    messages = [Message(role="user", content=prompt)]
    reply = providers.chat(ChatRequest(role="coding", messages=messages)).text
    code = extract_code_block(reply)
    if code is None:
        messages = messages + [
            Message(role="assistant", content=reply),
            Message(role="user", content="Reply with a single fenced code block."),
        ]
        reply = providers.chat(ChatRequest(role="coding", messages=messages)).text
        code = extract_code_block(reply)
        if code is None:
            return (
                "The coding agent could not produce runnable code for this "
                f"request: {request.code_message}"
            )

    result = execute_sandboxed(code, settings)
    if execution_log is not None:
        execution_log.append(result)

    if result.timed_out or result.exit_status != 0:
        messages = messages + [
            Message(role="assistant", content=reply),
            Message(
                role="user",
                content=(
                    "The program failed. Fix it and reply with a single "
                    "fenced code block.\n" + _describe_execution(result)
                ),
            ),
        ]
        try:
            repair_reply = providers.chat(ChatRequest(role="coding", messages=messages)).text
        except ProviderError:
            repair_reply = ""
        repaired = extract_code_block(repair_reply)
        if repaired is not None:
            code = repaired
            result = execute_sandboxed(code, settings)
            if execution_log is not None:
                execution_log.append(result)

    report_prompt = (
        "State in plain natural language what this program computed and "
        "what the result means for the request. If it failed, say so and "
        "explain briefly.\n\n"
        f"Request: {request.code_message}\n\n"
        f"Program:\n```\n{code}\n```\n\n" + _describe_execution(result)
    )
    report = providers.chat(
        ChatRequest(role="coding", messages=[Message(role="user", content=report_prompt)])
    )
    return report.text
