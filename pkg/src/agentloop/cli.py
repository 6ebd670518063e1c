"""Command-line entry points: answer, research, eval, replay."""

import argparse
import json
import logging
import os
import sys

from .backends import RecordingProviderSet, ReplayProviderSet
from .config import ConfigError, build_provider_factory, load_run_config
from .evalrun import (
    DatasetError,
    RESEARCH_PROMPT,
    format_report_table,
    load_dataset,
    run_eval,
)
from .orchestrator import PROVIDER_ERROR, SessionConfig, run_session
from .trace import SessionTrace


def _add_session_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="run config JSON file")
    parser.add_argument("--no-search", action="store_true", help="disable the web-search tool")
    parser.add_argument("--no-code", action="store_true", help="disable the code tool")
    parser.add_argument(
        "--no-mindmap",
        action="store_true",
        help="disable the mind-map tool (and default memory to none)",
    )
    parser.add_argument("--memory", choices=("none", "raw", "mindmap"), default=None)
    parser.add_argument("--no-breakdown", action="store_true", help="skip query breakdown")
    parser.add_argument("--no-rerank", action="store_true", help="skip reranking")
    parser.add_argument(
        "--no-mindmap-context",
        action="store_true",
        help="do not feed memory context to web search",
    )
    parser.add_argument(
        "--knowledge-refinement",
        action="store_true",
        help="summarize retrieved pages before answer extraction",
    )
    parser.add_argument("--max-tool-calls", type=int, default=None)


def _apply_overrides(session: SessionConfig, args) -> None:
    if args.no_search:
        session.web_search = False
    if args.no_code:
        session.code = False
    if args.no_mindmap:
        session.mind_map = False
        if args.memory is None:
            session.memory_mode = "none"
    if args.memory is not None:
        session.memory_mode = args.memory
    if args.no_breakdown:
        session.websearch.query_breakdown = False
    if args.no_rerank:
        session.websearch.rerank = False
    if args.no_mindmap_context:
        session.websearch.mindmap_context = False
    if args.knowledge_refinement:
        session.websearch.knowledge_refinement = True
    if args.max_tool_calls is not None:
        session.max_tool_calls = args.max_tool_calls
    session.validate()


def _run_single(question: str, args) -> int:
    run_config = load_run_config(args.config)
    _apply_overrides(run_config.session, args)
    providers = build_provider_factory(run_config)()
    result = run_session(question, run_config.session, providers)

    out_dir = args.out or os.path.join(run_config.trace_dir, result.trace.session_id)
    os.makedirs(out_dir, exist_ok=True)
    result.trace.save(os.path.join(out_dir, "trace.jsonl"))
    if isinstance(providers, RecordingProviderSet):
        providers.save(os.path.join(out_dir, "fixture.jsonl"))

    print(result.final_answer)
    print(
        f"[termination={result.termination}, trace={out_dir}/trace.jsonl]",
        file=sys.stderr,
    )
    return 1 if result.termination == PROVIDER_ERROR else 0


def cmd_answer(args) -> int:
    return _run_single(args.question, args)


def cmd_research(args) -> int:
    return _run_single(RESEARCH_PROMPT.format(topic=args.topic), args)


def cmd_eval(args) -> int:
    run_config = load_run_config(args.config)
    _apply_overrides(run_config.session, args)
    records = load_dataset(args.dataset)
    factory = build_provider_factory(run_config)
    report = run_eval(
        records,
        run_config.session,
        lambda record: factory(record.id),
        parallel=max(1, args.parallel),
    )
    print(format_report_table(report))
    report_path = args.report
    if report_path is None:
        os.makedirs(run_config.trace_dir, exist_ok=True)
        report_path = os.path.join(run_config.trace_dir, "eval-report.json")
    with open(report_path, "w", encoding="utf-8") as handle:
        json.dump(report, handle, indent=2, sort_keys=True)
    print(f"[report: {report_path}]", file=sys.stderr)
    return 0


def cmd_replay(args) -> int:
    trace_path = os.path.join(args.run_dir, "trace.jsonl")
    fixture_path = os.path.join(args.run_dir, "fixture.jsonl")
    try:
        with open(trace_path, encoding="utf-8") as handle:
            original_text = handle.read()
        original = SessionTrace.deserialize(original_text)
        providers = ReplayProviderSet.load(fixture_path)
    except (OSError, ValueError) as exc:
        print(f"cannot load run dir {args.run_dir}: {exc}", file=sys.stderr)
        return 2
    config = SessionConfig.from_snapshot(original.config_snapshot)
    result = run_session(
        original.question, config, providers, session_id=original.session_id
    )
    replayed_text = result.trace.serialize()
    if replayed_text == original_text:
        print(f"replay ok: trace is byte-identical ({len(result.trace.records)} records)")
        return 0
    print("replay diverged from the recorded trace", file=sys.stderr)
    for i, (old, new) in enumerate(
        zip(original_text.splitlines(), replayed_text.splitlines())
    ):
        if old != new:
            print(f"first divergent line {i}:\n  recorded: {old}\n  replayed: {new}", file=sys.stderr)
            break
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agentloop",
        description="Tool-augmented reasoning sessions with replayable providers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_answer = sub.add_parser("answer", help="answer a question")
    p_answer.add_argument("question")
    p_answer.add_argument("--out", default=None, help="output directory for the trace")
    _add_session_flags(p_answer)
    p_answer.set_defaults(func=cmd_answer)

    p_research = sub.add_parser("research", help="write a long-form article on a topic")
    p_research.add_argument("topic")
    p_research.add_argument("--out", default=None)
    _add_session_flags(p_research)
    p_research.set_defaults(func=cmd_research)

    p_eval = sub.add_parser("eval", help="run and score a JSONL dataset")
    p_eval.add_argument("dataset")
    p_eval.add_argument("--parallel", type=int, default=1)
    p_eval.add_argument("--report", default=None, help="report JSON output path")
    _add_session_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_replay = sub.add_parser("replay", help="re-execute a recorded run and verify the trace")
    p_replay.add_argument("run_dir")
    p_replay.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
