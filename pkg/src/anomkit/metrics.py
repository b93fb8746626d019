"""Response parsing and evaluation.

Model responses follow a tagged layout: free-form reasoning inside
``<think>...</think>``, the predicted intervals as a JSON list of
``[start, end]`` pairs inside ``<answer>...</answer>``, and the class
name inside ``<class>...</class>``. Localization quality is scored
with distance-decayed affinity precision/recall over covered indices.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    AnomalyClass,
    LabeledInstance,
    normalize_intervals,
    record_to_instance,
)
from .errors import ConfigError, DataError
from .jsonl import read_jsonl

_TAG_PATTERNS = {
    "think": re.compile(r"<think>(.*?)</think>", re.DOTALL | re.IGNORECASE),
    "answer": re.compile(r"<answer>(.*?)</answer>", re.DOTALL | re.IGNORECASE),
    "class": re.compile(r"<class>(.*?)</class>", re.DOTALL | re.IGNORECASE),
}


def tag_blocks(text: str, tag: str) -> list[str]:
    """All contents of ``<tag>...</tag>`` blocks, in order of appearance."""
    return _TAG_PATTERNS[tag].findall(text)


def default_window(length: int) -> int:
    """Default affinity window: 1% of the series length, at least 1."""
    return max(1, round(0.01 * length))


def _parse_answer(content: str) -> Optional[list[tuple[int, int]]]:
    try:
        parsed = json.loads(content.strip())
    except (json.JSONDecodeError, ValueError):
        return None
    if not isinstance(parsed, list):
        return None
    pairs: list[tuple[int, int]] = []
    for item in parsed:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            return None
        start, end = item
        if isinstance(start, bool) or isinstance(end, bool):
            return None
        if not isinstance(start, int) or not isinstance(end, int):
            return None
        pairs.append((start, end))
    return pairs


@dataclass(frozen=True)
class ResponseRecord:
    """Parsed view of one model response; flags mark which blocks parsed."""

    raw: str
    think: Optional[str]
    intervals: Optional[tuple[tuple[int, int], ...]]
    anomaly_class: Optional[AnomalyClass]
    class_text: Optional[str]
    think_ok: bool
    answer_ok: bool
    class_ok: bool


def parse_response(text: str) -> ResponseRecord:
    """Extract the first well-formed think/answer/class blocks.

    Tolerant of surrounding prose and never raises; failures are
    reported through the parse flags.
    """
    raw = str(text)
    thinks = tag_blocks(raw, "think")
    answers = tag_blocks(raw, "answer")
    classes = tag_blocks(raw, "class")

    think = thinks[0].strip() if thinks else None

    intervals: Optional[tuple[tuple[int, int], ...]] = None
    for content in answers:
        parsed = _parse_answer(content)
        if parsed is not None:
            intervals = tuple(parsed)
            break

    anomaly_class: Optional[AnomalyClass] = None
    class_text: Optional[str] = None
    for content in classes:
        class_text = content.strip()
        try:
            anomaly_class = AnomalyClass.parse(class_text)
            break
        except DataError:
            anomaly_class = None
    return ResponseRecord(
        raw=raw,
        think=think,
        intervals=intervals,
        anomaly_class=anomaly_class,
        class_text=class_text,
        think_ok=think is not None,
        answer_ok=intervals is not None,
        class_ok=anomaly_class is not None,
    )


@dataclass(frozen=True)
class AffinityScores:
    precision: float
    recall: float
    f1: float
    window: int


def _covered_indices(intervals: Sequence[tuple[int, int]], length: int) -> np.ndarray:
    normalized = normalize_intervals(intervals, length)
    if not normalized:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(
        [np.arange(iv.start, iv.end + 1, dtype=np.int64) for iv in normalized]
    )


def _mean_affinity(sources: np.ndarray, targets: np.ndarray, window: int) -> float:
    """Mean of max(0, 1 - d/window) over source indices, d = distance to targets."""
    pos = np.searchsorted(targets, sources)
    left = targets[np.clip(pos - 1, 0, targets.size - 1)]
    right = targets[np.clip(pos, 0, targets.size - 1)]
    dist = np.minimum(np.abs(sources - left), np.abs(sources - right))
    return float(np.mean(np.maximum(0.0, 1.0 - dist / window)))


def affinity_scores(
    pred: Sequence[tuple[int, int]],
    gt: Sequence[tuple[int, int]],
    length: int,
    window: int,
) -> AffinityScores:
    """Distance-decayed precision/recall between covered index sets.

    Precision averages, over predicted indices, the affinity to the
    ground-truth set; recall mirrors it. Conventions: both sides empty
    scores (1, 1, 1); exactly one side empty scores (0, 0, 0).
    """
    if window < 1:
        raise ConfigError(f"affinity window must be >= 1, got {window}")
    pred_idx = _covered_indices(pred, length)
    gt_idx = _covered_indices(gt, length)
    if pred_idx.size == 0 and gt_idx.size == 0:
        return AffinityScores(1.0, 1.0, 1.0, window)
    if pred_idx.size == 0 or gt_idx.size == 0:
        return AffinityScores(0.0, 0.0, 0.0, window)
    precision = _mean_affinity(pred_idx, gt_idx, window)
    recall = _mean_affinity(gt_idx, pred_idx, window)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return AffinityScores(precision, recall, f1, window)


def classification_accuracy(
    predicted: Sequence[Optional[AnomalyClass | str]],
    truth: Sequence[AnomalyClass | str],
) -> float:
    """Exact-match fraction; an unparseable prediction counts as wrong."""
    if len(predicted) != len(truth):
        raise DataError(
            f"prediction/truth length mismatch: {len(predicted)} vs {len(truth)}"
        )
    if not truth:
        return 0.0
    correct = 0
    for pred, gt in zip(predicted, truth):
        gt_cls = gt if isinstance(gt, AnomalyClass) else AnomalyClass.parse(gt)
        if pred is None:
            continue
        try:
            pred_cls = pred if isinstance(pred, AnomalyClass) else AnomalyClass.parse(pred)
        except DataError:
            continue
        if pred_cls is gt_cls:
            correct += 1
    return correct / len(truth)


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    count: int


@dataclass(frozen=True)
class EvalReport:
    """Classification accuracy plus per-class affinity localization scores."""

    accuracy: float
    per_class: dict[AnomalyClass, ClassScores]
    macro_f1: float
    instances: int
    missing_predictions: int
    window_desc: str


@dataclass(frozen=True)
class Prediction:
    """Normalized prediction for one instance."""

    anomaly_class: Optional[AnomalyClass]
    intervals: Optional[tuple[tuple[int, int], ...]]


def prediction_from_record(record: dict) -> tuple[str, Prediction]:
    """Accept either a raw tagged response or a pre-parsed record."""
    if "id" not in record:
        raise DataError("prediction record is missing 'id'")
    ident = str(record["id"])
    if "response" in record:
        parsed = parse_response(record["response"])
        return ident, Prediction(parsed.anomaly_class, parsed.intervals)
    if "class" in record or "intervals" in record:
        cls: Optional[AnomalyClass]
        try:
            cls = AnomalyClass.parse(record.get("class", ""))
        except DataError:
            cls = None
        raw_intervals = record.get("intervals")
        intervals = None
        if isinstance(raw_intervals, list):
            try:
                intervals = tuple((int(s), int(e)) for s, e in raw_intervals)
            except (TypeError, ValueError):
                intervals = None
        return ident, Prediction(cls, intervals)
    raise DataError(f"prediction record for id {ident!r} has neither 'response' nor 'class'")


_EMPTY_PREDICTION = Prediction(AnomalyClass.NORMAL, ())


def evaluate_records(
    predictions: Mapping[str, Prediction],
    ground_truth: Sequence[LabeledInstance],
    window: Optional[int] = None,
) -> EvalReport:
    """Score predictions against labeled instances.

    Instances without a prediction are scored as normal/empty. The
    affinity window defaults to 1% of each instance's length.
    """
    unknown = set(predictions) - {inst.instance_id for inst in ground_truth}
    if unknown:
        raise DataError(
            f"predictions reference unknown instance ids: {sorted(unknown)[:5]}"
        )
    per_class_rows: dict[AnomalyClass, list[AffinityScores]] = {}
    correct = 0
    missing = 0
    for inst in ground_truth:
        pred = predictions.get(inst.instance_id)
        if pred is None:
            missing += 1
            pred = _EMPTY_PREDICTION
        w = window if window is not None else default_window(inst.length)
        if pred.intervals is None:
            scores = AffinityScores(0.0, 0.0, 0.0, w)
        else:
            try:
                scores = affinity_scores(
                    list(pred.intervals),
                    [(iv.start, iv.end) for iv in inst.intervals],
                    inst.length,
                    w,
                )
            except DataError:
                scores = AffinityScores(0.0, 0.0, 0.0, w)
        per_class_rows.setdefault(inst.anomaly_class, []).append(scores)
        if pred.anomaly_class is inst.anomaly_class and pred.anomaly_class is not None:
            correct += 1
    per_class = {
        cls: ClassScores(
            precision=float(np.mean([s.precision for s in rows])),
            recall=float(np.mean([s.recall for s in rows])),
            f1=float(np.mean([s.f1 for s in rows])),
            count=len(rows),
        )
        for cls, rows in sorted(per_class_rows.items(), key=lambda kv: kv[0].value)
    }
    macro_f1 = float(np.mean([cs.f1 for cs in per_class.values()])) if per_class else 0.0
    return EvalReport(
        accuracy=correct / len(ground_truth) if ground_truth else 0.0,
        per_class=per_class,
        macro_f1=macro_f1,
        instances=len(ground_truth),
        missing_predictions=missing,
        window_desc=str(window) if window is not None else "1% of T",
    )


def evaluate_dataset(
    predictions_path: str | Path,
    ground_truth_path: str | Path,
    window: Optional[int] = None,
) -> EvalReport:
    """File-level wrapper: predictions JSONL against instance JSONL."""
    ground_truth = [record_to_instance(rec) for rec in read_jsonl(ground_truth_path)]
    predictions: dict[str, Prediction] = {}
    for record in read_jsonl(predictions_path):
        ident, pred = prediction_from_record(record)
        predictions[ident] = pred
    return evaluate_records(predictions, ground_truth, window)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "accuracy": report.accuracy,
        "macro_f1": report.macro_f1,
        "instances": report.instances,
        "missing_predictions": report.missing_predictions,
        "window": report.window_desc,
        "per_class": {
            cls.value: {
                "precision": cs.precision,
                "recall": cs.recall,
                "f1": cs.f1,
                "count": cs.count,
            }
            for cls, cs in report.per_class.items()
        },
    }


def report_to_table(report: EvalReport) -> str:
    """Aligned plain-text table mirroring the JSON report."""
    lines = [
        f"instances          {report.instances}",
        f"missing predictions{report.missing_predictions:>5}",
        f"affinity window    {report.window_desc}",
        f"accuracy           {report.accuracy:.4f}",
        f"macro F1           {report.macro_f1:.4f}",
        "",
        f"{'class':<18}{'P':>9}{'R':>9}{'F1':>9}{'n':>7}",
    ]
    for cls, cs in report.per_class.items():
        lines.append(
            f"{cls.value:<18}{cs.precision:>9.4f}{cs.recall:>9.4f}{cs.f1:>9.4f}{cs.count:>7}"
        )
    return "\n".join(lines) + "\n"


def report_to_csv(report: EvalReport) -> str:
    """Per-class scores as comma-delimited rows."""
    lines = ["class,precision,recall,f1,count"]
    for cls, cs in report.per_class.items():
        lines.append(f"{cls.value},{cs.precision:.6f},{cs.recall:.6f},{cs.f1:.6f},{cs.count}")
    return "\n".join(lines) + "\n"
