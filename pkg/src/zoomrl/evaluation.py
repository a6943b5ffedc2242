"""Evaluation protocol: strict extraction, rubric accuracy, inclusion
accuracy, difficulty stratification, and report aggregation.

Extraction runs every raw response through the strict extractor judge;
the sentinel reply "Refusal" (exact, case-sensitive) marks unanswerable
responses, which score zero everywhere. Rubric scores live on the lattice
{0, 0.25, 0.5, 0.75, 1.0}; off-lattice judge replies snap to the nearest
point with a logged warning. Inclusion accuracy is a hard-recall proxy:
whether the normalized ground truth occurs inside the normalized extracted
answer. Difficulty buckets come from a vision judge's 1..10 zoom score
(1-3 easy, 4-7 medium, 8-10 hard).
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

from .errors import StratificationError, TransportError
from .judges import JudgeHandle
from .types import Sample

logger = logging.getLogger(__name__)

# Near-greedy decoding defaults for live-backend evaluation runs.
EVAL_TEMPERATURE = 0.01
EVAL_TOP_P = 0.95

SCORE_LATTICE = (0.0, 0.25, 0.5, 0.75, 1.0)
BUCKET_ORDER = ("easy", "medium", "hard")

_ZOOM_SCORE_RE = re.compile(r"zoom_score\W*[:=]\W*(\d+(?:\.\d+)?)")


class _Refusal:
    """Sentinel for an unanswerable or unrecognizable response."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "REFUSAL"


REFUSAL = _Refusal()


def extract_answer(question: str, raw_response: str, judge: JudgeHandle) -> str | _Refusal:
    """Run the strict extractor; its single-line output is stripped, and the
    exact reply "Refusal" maps to the sentinel."""
    reply = judge.invoke(question=question, response=raw_response).strip()
    return REFUSAL if reply == "Refusal" else reply


def snap_to_lattice(value: float) -> float:
    return min(SCORE_LATTICE, key=lambda point: abs(point - value))


@dataclass(frozen=True)
class ScoreResult:
    score: float
    raw_reply: str | None = None
    snapped: bool = False
    error: bool = False


def gpt_accuracy(
    question: str, ground_truth: str, extracted: str | _Refusal, judge: JudgeHandle
) -> ScoreResult:
    """Rubric score for an extracted answer. Refusal short-circuits to 0.

    An unparseable judge reply is retried once (bypassing the cache, since
    the cached reply is the unparseable one); a second failure scores 0 with
    the error flag set.
    """
    if extracted is REFUSAL:
        return ScoreResult(score=0.0)
    reply = judge.invoke(question=question, ground_truth=ground_truth, answer=extracted)
    value = _parse_float(reply)
    if value is None:
        reply = judge.invoke(
            question=question, ground_truth=ground_truth, answer=extracted, bypass_cache=True
        )
        value = _parse_float(reply)
        if value is None:
            logger.warning("judge reply unparseable after retry: %r", reply)
            return ScoreResult(score=0.0, raw_reply=reply, error=True)
    snapped = snap_to_lattice(value)
    if snapped != value:
        logger.warning("judge score %s off the rubric lattice; snapped to %s", value, snapped)
        return ScoreResult(score=snapped, raw_reply=reply, snapped=True)
    return ScoreResult(score=snapped, raw_reply=reply)


def _parse_float(text: str) -> float | None:
    match = re.search(r"-?\d+(?:\.\d+)?", text)
    return float(match.group(0)) if match else None


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().lower())


def inclusion_accuracy(ground_truth: str, extracted: str | _Refusal) -> bool:
    """Hard-recall proxy: normalized ground truth contained in the
    normalized extracted answer. Refusal never counts."""
    if extracted is REFUSAL:
        return False
    return _normalize(ground_truth) in _normalize(extracted)


def stratify(sample: Sample, judge: JudgeHandle) -> str:
    """Difficulty bucket from the vision judge's {reasoning, zoom_score}
    verdict. Integer scores 1-3 map to easy, 4-7 medium, 8-10 hard; anything
    else is a per-sample stratification error."""
    try:
        reply = judge.invoke(question=sample.question, image_path=sample.image_path)
    except TransportError as exc:
        raise StratificationError(sample.id, f"difficulty judge transport failed: {exc}")
    score = _parse_zoom_score(reply)
    if score is None:
        raise StratificationError(sample.id, f"no usable zoom_score in judge reply {reply!r}")
    if not float(score).is_integer():
        raise StratificationError(sample.id, f"zoom_score {score} is not an integer")
    score = int(score)
    if 1 <= score <= 3:
        return "easy"
    if 4 <= score <= 7:
        return "medium"
    if 8 <= score <= 10:
        return "hard"
    raise StratificationError(sample.id, f"zoom_score {score} out of range 1-10")


def _parse_zoom_score(reply: str) -> float | None:
    """Lenient verdict parse: proper JSON first, then a regex fallback for
    judges that emit the loose object format from the prompt."""
    start, end = reply.find("{"), reply.rfind("}")
    if start != -1 and end > start:
        try:
            obj = json.loads(reply[start : end + 1])
            value = obj.get("zoom_score")
            if isinstance(value, bool):
                return None
            if isinstance(value, (int, float)):
                return float(value)
        except (json.JSONDecodeError, AttributeError):
            pass
    match = _ZOOM_SCORE_RE.search(reply)
    return float(match.group(1)) if match else None


@dataclass(frozen=True)
class EvalRecord:
    sample_id: str
    raw_answer: str
    extracted: str | _Refusal
    gpt_score: float
    inclusion: bool
    bucket: str | None = None
    dataset: str = "all"

    def __post_init__(self) -> None:
        if self.extracted is REFUSAL and (self.gpt_score != 0.0 or self.inclusion):
            raise ValueError("Refusal records must score 0 with inclusion False")
        if self.gpt_score not in SCORE_LATTICE:
            raise ValueError(f"gpt_score {self.gpt_score} is off the rubric lattice")

    def to_record(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "dataset": self.dataset,
            "raw_answer": self.raw_answer,
            "refusal": self.extracted is REFUSAL,
            "extracted": None if self.extracted is REFUSAL else self.extracted,
            "gpt_score": self.gpt_score,
            "inclusion": self.inclusion,
            "bucket": self.bucket,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "EvalRecord":
        extracted = REFUSAL if record.get("refusal") else record["extracted"]
        return cls(
            sample_id=record["sample_id"],
            dataset=record.get("dataset", "all"),
            raw_answer=record.get("raw_answer", ""),
            extracted=extracted,
            gpt_score=float(record["gpt_score"]),
            inclusion=bool(record["inclusion"]),
            bucket=record.get("bucket"),
        )


def load_eval_records(path: str | Path) -> list[EvalRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(EvalRecord.from_record(json.loads(line)))
    return records


def write_eval_records(records: Iterable[EvalRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_record(), sort_keys=True, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class ReportRow:
    dataset: str
    bucket: str
    count: int
    gpt_acc: float
    inc_acc: float


@dataclass(frozen=True)
class Report:
    rows: tuple[ReportRow, ...]
    notes: tuple[str, ...] = ()


def aggregate(
    records: list[EvalRecord],
    expected_groups: Iterable[tuple[str, str]] | None = None,
) -> Report:
    """Per (dataset, bucket) group: mean rubric score and inclusion fraction
    as percentages, two decimals, deterministic row order.

    ``expected_groups`` optionally declares the full grid; a declared group
    with no records is omitted from the rows with a note."""
    if not records:
        raise ValueError("cannot aggregate an empty record list")
    groups: dict[tuple[str, str], list[EvalRecord]] = {}
    if expected_groups is not None:
        for key in expected_groups:
            groups.setdefault(tuple(key), [])
    for record in records:
        bucket = record.bucket or "unstratified"
        groups.setdefault((record.dataset, bucket), []).append(record)

    def bucket_rank(bucket: str) -> int:
        return BUCKET_ORDER.index(bucket) if bucket in BUCKET_ORDER else len(BUCKET_ORDER)

    rows = []
    notes = []
    for (dataset, bucket) in sorted(groups, key=lambda g: (g[0], bucket_rank(g[1]), g[1])):
        members = groups[(dataset, bucket)]
        if not members:
            notes.append(f"group {dataset}/{bucket} empty; row omitted")
            continue
        gpt = sum(r.gpt_score for r in members) / len(members) * 100.0
        inc = sum(1 for r in members if r.inclusion) / len(members) * 100.0
        rows.append(
            ReportRow(
                dataset=dataset,
                bucket=bucket,
                count=len(members),
                gpt_acc=round(gpt, 2),
                inc_acc=round(inc, 2),
            )
        )
    return Report(rows=tuple(rows), notes=tuple(notes))


def report_to_dict(report: Report) -> dict[str, Any]:
    return {
        "rows": [
            {
                "dataset": row.dataset,
                "bucket": row.bucket,
                "count": row.count,
                "gpt_acc": f"{row.gpt_acc:.2f}",
                "inc_acc": f"{row.inc_acc:.2f}",
            }
            for row in report.rows
        ],
        "notes": list(report.notes),
    }


def render_table(report: Report) -> str:
    """Aligned plain-text table for standard output."""
    headers = ("dataset", "bucket", "count", "GPT ACC", "Inc. ACC")
    cells = [
        (row.dataset, row.bucket, str(row.count), f"{row.gpt_acc:.2f}", f"{row.inc_acc:.2f}")
        for row in report.rows
    ]
    widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h)
              for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for row in cells:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    for note in report.notes:
        lines.append(f"# {note}")
    return "\n".join(lines)


def evaluate_response(
    sample: Sample,
    raw_response: str,
    extractor: JudgeHandle,
    rubric: JudgeHandle,
    *,
    dataset: str = "all",
    bucket: str | None = None,
) -> EvalRecord:
    """Extraction, rubric scoring, and inclusion for one response."""
    extracted = extract_answer(sample.question, raw_response, extractor)
    if extracted is REFUSAL:
        score = 0.0
        inclusion = False
    else:
        score = gpt_accuracy(sample.question, sample.ground_truth, extracted, rubric).score
        inclusion = inclusion_accuracy(sample.ground_truth, extracted)
    return EvalRecord(
        sample_id=sample.id,
        dataset=dataset,
        raw_answer=raw_response,
        extracted=extracted,
        gpt_score=score,
        inclusion=inclusion,
        bucket=bucket or sample.difficulty,
    )
