"""Dataset evaluation harness: run sessions over records, score, report.

Datasets are JSON lines. Question records carry a single-letter gold
answer and score by exact-match accuracy; topic records carry a reference
article plus gold entities and score by ROUGE-1, ROUGE-L, and entity
recall. Sessions may run concurrently; aggregation is order-independent.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import metrics
from .orchestrator import COMPLETED, SessionConfig, run_session

RESEARCH_PROMPT = "{topic}\n\nGenerate a comprehensive article on this topic."


class DatasetError(Exception):
    pass


@dataclass
class EvalRecord:
    id: str
    question: str
    gold_answer: str | None = None
    gold_article: str | None = None
    gold_entities: list[str] | None = None
    prediction: str = ""
    metrics: dict = field(default_factory=dict)

    @property
    def is_multiple_choice(self) -> bool:
        return self.gold_answer is not None


_RECORD_KEYS = {"id", "question", "topic", "gold_answer", "gold_article", "gold_entities"}


def load_dataset(path) -> list[EvalRecord]:
    records: list[EvalRecord] = []
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        unknown = set(raw) - _RECORD_KEYS
        if unknown:
            raise DatasetError(f"{path}:{lineno}: unknown keys {sorted(unknown)}")
        if "id" not in raw:
            raise DatasetError(f"{path}:{lineno}: missing id")
        question = raw.get("question")
        topic = raw.get("topic")
        if (question is None) == (topic is None):
            raise DatasetError(f"{path}:{lineno}: need exactly one of question/topic")
        if topic is not None:
            if "gold_article" not in raw:
                raise DatasetError(f"{path}:{lineno}: topic records need gold_article")
            records.append(
                EvalRecord(
                    id=str(raw["id"]),
                    question=RESEARCH_PROMPT.format(topic=topic),
                    gold_article=raw["gold_article"],
                    gold_entities=list(raw.get("gold_entities") or []) or None,
                )
            )
        else:
            if "gold_answer" not in raw:
                raise DatasetError(f"{path}:{lineno}: question records need gold_answer")
            records.append(
                EvalRecord(
                    id=str(raw["id"]),
                    question=question,
                    gold_answer=str(raw["gold_answer"]),
                )
            )
    if not records:
        raise DatasetError(f"{path}: dataset is empty")
    return records


def score_record(record: EvalRecord) -> None:
    if record.is_multiple_choice:
        extracted = metrics.extract_choice(record.prediction)
        record.metrics = {
            "extracted": extracted,
            "correct": 1.0 if extracted == record.gold_answer else 0.0,
        }
        return
    rouge_1 = metrics.rouge_n(record.prediction, record.gold_article, 1)
    rouge_l_score = metrics.rouge_l(record.prediction, record.gold_article)
    record.metrics = {
        "rouge_1_f1": rouge_1.f1,
        "rouge_1_recall": rouge_1.recall,
        "rouge_l_f1": rouge_l_score.f1,
    }
    if record.gold_entities:
        record.metrics["entity_recall"] = metrics.entity_recall(
            record.prediction, record.gold_entities
        )


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def aggregate(records: list[EvalRecord]) -> dict:
    mc = [r for r in records if r.is_multiple_choice]
    articles = [r for r in records if not r.is_multiple_choice]
    out: dict = {"count": len(records)}
    if mc:
        out["mc_accuracy"] = metrics.mc_accuracy(mc)
        out["mc_unparsed"] = sum(1 for r in mc if r.metrics.get("extracted") is None)
    for key in ("rouge_1_f1", "rouge_l_f1", "entity_recall"):
        values = [r.metrics[key] for r in articles if key in r.metrics]
        if values:
            out[key] = _mean(values)
    return out


def run_eval(
    records: list[EvalRecord],
    config: SessionConfig,
    provider_factory,
    parallel: int = 1,
) -> dict:
    """Run one session per record, score, and build the report.

    provider_factory is called once per record so scripted and replay
    providers stay session-local.
    """

    def run_one(record: EvalRecord) -> None:
        result = run_session(record.question, config, provider_factory(record))
        record.prediction = result.final_answer
        score_record(record)
        record.metrics["termination"] = result.termination
        record.metrics["session_completed"] = result.termination == COMPLETED

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            list(pool.map(run_one, records))
    else:
        for record in records:
            run_one(record)

    return {
        "records": [
            {
                "id": r.id,
                "prediction": r.prediction,
                "metrics": r.metrics,
            }
            for r in sorted(records, key=lambda r: r.id)
        ],
        "aggregates": aggregate(records),
    }


def format_report_table(report: dict) -> str:
    """Small fixed-width table for terminal output."""
    lines = ["id            metrics", "-" * 60]
    for entry in report["records"]:
        shown = {
            k: (round(v, 4) if isinstance(v, float) else v)
            for k, v in entry["metrics"].items()
            if k not in ("session_completed",)
        }
        lines.append(f"{entry['id']:<13} {shown}")
    lines.append("-" * 60)
    aggregates = {
        k: (round(v, 4) if isinstance(v, float) else v)
        for k, v in report["aggregates"].items()
    }
    lines.append(f"aggregates    {aggregates}")
    return "\n".join(lines)
