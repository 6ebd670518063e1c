import time

import pytest

from agentloop.backends import MockProviderSet
from agentloop.codeagent import (
    CODE_REQUEST_TEMPLATE,
    CodeExecSettings,
    CodeRequest,
    ConfigurationError,
    ExecutionResult,
    build_code_request,
    execute_sandboxed,
    extract_code_block,
    run_code_task,
)


def fenced(code: str, lang: str = "python") -> str:
    return f"Here you go:\n```{lang}\n{code}\n```"


class TestTemplate:
    def test_mean_example_exact_prefix(self):
        prompt = build_code_request(
            CodeRequest("compute the mean of [1,2,3]", "ctx", "q")
        )
        assert prompt.startswith(
            "Write code to perform compute the mean of [1,2,3] "
            "given the context ctx to answer the query q."
        )

    def test_empty_context_allowed(self):
        prompt = build_code_request(CodeRequest("task", "", "q"))
        assert "given the context  to answer" in prompt

    def test_no_escaping_of_field_text(self):
        prompt = build_code_request(
            CodeRequest("use the context", "the context word", "context?")
        )
        assert prompt.startswith(
            "Write code to perform use the context given the context "
            "the context word to answer the query context?."
        )

    def test_template_fidelity_for_three_instantiations(self):
        cases = [
            ("sum a list", "numbers 1..10", "what is the total"),
            ("sort values", "", "ordering"),
            ("invert a matrix", "2x2 case", "solve the system"),
        ]
        for message, context, query in cases:
            expected = CODE_REQUEST_TEMPLATE.format(
                code_message=message, reasoning_context=context, user_query=query
            )
            assert build_code_request(CodeRequest(message, context, query)).startswith(expected)

    def test_empty_code_message_rejected(self):
        with pytest.raises(ValueError):
            build_code_request(CodeRequest(""))


class TestExtractCodeBlock:
    def test_largest_block_wins(self):
        text = "```python\nshort\n```\nand\n```python\nmuch longer block here\n```"
        assert extract_code_block(text) == "much longer block here\n"

    def test_no_fence_returns_none(self):
        assert extract_code_block("no code at all") is None

    def test_plain_fence_without_language(self):
        assert extract_code_block("```\nx = 1\n```") == "x = 1\n"


class TestExecuteSandboxed:
    def test_prints_42(self):
        result = execute_sandboxed('print(42)')
        assert result.stdout == "42\n"
        assert result.exit_status == 0
        assert not result.timed_out

    def test_infinite_loop_killed_within_grace(self):
        settings = CodeExecSettings(timeout_seconds=0.5)
        started = time.monotonic()
        result = execute_sandboxed("while True: pass", settings)
        elapsed = time.monotonic() - started
        assert result.timed_out
        assert result.exit_status != 0
        assert elapsed <= settings.timeout_seconds + 1.0

    def test_traceback_captured_with_nonzero_exit(self):
        result = execute_sandboxed("raise ValueError('boom')")
        assert result.exit_status != 0
        assert "ValueError" in result.stderr

    def test_output_capped(self):
        settings = CodeExecSettings(output_cap_bytes=100)
        result = execute_sandboxed("print('x' * 100000)", settings)
        assert len(result.stdout) == 100

    def test_missing_interpreter_is_configuration_error(self):
        settings = CodeExecSettings(interpreter=["/no/such/binary"])
        with pytest.raises(ConfigurationError):
            execute_sandboxed("print(1)", settings)

    def test_runs_in_empty_scratch_directory(self):
        result = execute_sandboxed("import os; print(sorted(os.listdir('.')))")
        assert result.stdout.strip() == "['main.py']"


class TestRunCodeTask:
    def test_mean_fixture(self):
        providers = MockProviderSet(
            chat_scripts={
                "coding": [
                    fenced("print(sum([1, 2, 3]) / 3)"),
                    "The program computed the mean of [1, 2, 3], which is 2.0.",
                ]
            }
        )
        log: list[ExecutionResult] = []
        answer = run_code_task(
            CodeRequest("compute the mean of [1,2,3]", "", "mean?"),
            providers,
            execution_log=log,
        )
        assert "2" in answer
        assert len(log) == 1
        assert log[0].stdout == "2.0\n"
        report_prompt = providers.chat_requests[-1].messages[0].content
        assert "2.0" in report_prompt  # real stdout fed to the reporter

    def test_failing_then_repaired_runs_twice(self):
        providers = MockProviderSet(
            chat_scripts={
                "coding": [
                    fenced("raise RuntimeError('first try broken')"),
                    fenced("print('fixed output')"),
                    "After one repair the program printed: fixed output.",
                ]
            }
        )
        log: list[ExecutionResult] = []
        answer = run_code_task(CodeRequest("do the thing"), providers, execution_log=log)
        assert len(log) == 2
        assert log[0].exit_status != 0
        assert log[1].exit_status == 0
        assert "fixed" in answer

    def test_both_attempts_fail_still_answers(self):
        providers = MockProviderSet(
            chat_scripts={
                "coding": [
                    fenced("raise RuntimeError('a')"),
                    fenced("raise RuntimeError('b')"),
                    "The computation failed twice; no result is available.",
                ]
            }
        )
        log: list[ExecutionResult] = []
        answer = run_code_task(CodeRequest("impossible"), providers, execution_log=log)
        assert len(log) == 2
        assert "failed" in answer

    def test_no_fenced_code_reprompted_then_reported(self):
        providers = MockProviderSet(
            chat_scripts={"coding": ["no code here", "still no code"]}
        )
        log: list[ExecutionResult] = []
        answer = run_code_task(CodeRequest("mystery"), providers, execution_log=log)
        assert log == []
        assert "could not produce runnable code" in answer
        assert len(providers.chat_requests) == 2

    def test_at_most_two_executions_ever(self):
        providers = MockProviderSet(
            chat_scripts={
                "coding": [
                    fenced("raise RuntimeError('x')"),
                    fenced("raise RuntimeError('y')"),
                    "report",
                ]
            },
            cycle=True,
        )
        log: list[ExecutionResult] = []
        run_code_task(CodeRequest("task"), providers, execution_log=log)
        assert len(log) == 2
