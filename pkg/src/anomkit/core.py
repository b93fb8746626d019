"""Domain types and interval algebra shared by every other module.

Conventions used throughout the package:

* series are 1-D float arrays sampled at regular intervals; the array
  index doubles as the timestamp,
* anomalous ranges are 0-based, inclusive-both-ends ``(start, end)``
  pairs; ``start == end`` marks a single-point anomaly,
* a "normal" instance is exactly one with an empty interval list.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DataError


class AnomalyClass(Enum):
    """Closed set of anomaly categories, serialized with the prompt vocabulary."""

    GLOBAL_POINT = "global point"
    CONTEXTUAL_POINT = "contextual point"
    TREND = "trend"
    SEASONAL = "seasonal"
    SHAPELET = "shapelet"
    NORMAL = "normal"

    @classmethod
    def parse(cls, text: str) -> "AnomalyClass":
        """Parse a class name, tolerating case, underscores and stray spaces."""
        normalized = " ".join(str(text).replace("_", " ").lower().split())
        for member in cls:
            if member.value == normalized:
                return member
        raise DataError(f"unknown anomaly class: {text!r}")


ANOMALY_CLASSES: tuple[AnomalyClass, ...] = tuple(
    c for c in AnomalyClass if c is not AnomalyClass.NORMAL
)


class Interval(NamedTuple):
    """Inclusive index range ``[start, end]`` within a series."""

    start: int
    end: int


def as_series(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Validate and freeze a raw value sequence as a series array.

    Requires at least two samples and rejects NaN/Inf.
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DataError(f"series must be 1-D, got shape {arr.shape}")
    if arr.size < 2:
        raise DataError(f"series must hold at least 2 samples, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DataError("series contains non-finite values")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


def normalize_intervals(
    intervals: Iterable[tuple[int, int]], length: int
) -> list[Interval]:
    """Sort, clamp to ``[0, length-1]`` and merge overlapping or adjacent intervals.

    Adjacent ranges such as ``[5,7],[8,9]`` fuse into one contiguous region.
    An interval lying entirely outside the series raises ``DataError``.
    Idempotent.
    """
    items: list[Interval] = []
    for raw in intervals:
        start, end = int(raw[0]), int(raw[1])
        if start > end:
            raise DataError(f"interval start {start} exceeds end {end}")
        if end < 0 or start > length - 1:
            raise DataError(
                f"interval [{start}, {end}] lies outside series of length {length}"
            )
        items.append(Interval(max(start, 0), min(end, length - 1)))
    items.sort()
    merged: list[Interval] = []
    for iv in items:
        if merged and iv.start <= merged[-1].end + 1:
            merged[-1] = Interval(merged[-1].start, max(merged[-1].end, iv.end))
        else:
            merged.append(iv)
    return merged


def intervals_to_labels(
    intervals: Iterable[tuple[int, int]], length: int
) -> np.ndarray:
    """Expand intervals into a 0/1 vector of exactly ``length`` entries."""
    labels = np.zeros(length, dtype=np.int8)
    for start, end in intervals:
        labels[start : end + 1] = 1
    return labels


def labels_to_intervals(labels: Sequence[int] | np.ndarray) -> list[Interval]:
    """Collapse a 0/1 vector into maximal runs of ones."""
    arr = np.asarray(labels, dtype=np.int8)
    if arr.size == 0:
        return []
    boundaries = np.flatnonzero(np.diff(arr) != 0) + 1
    runs = np.split(np.arange(arr.size), boundaries)
    return [Interval(int(r[0]), int(r[-1])) for r in runs if arr[r[0]] == 1]


@dataclass(frozen=True)
class LabeledInstance:
    """A univariate series together with its ground-truth annotation."""

    instance_id: str
    values: np.ndarray
    anomaly_class: AnomalyClass
    intervals: tuple[Interval, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", as_series(self.values))
        normalized = normalize_intervals(self.intervals, len(self.values))
        object.__setattr__(self, "intervals", tuple(normalized))
        if (self.anomaly_class is AnomalyClass.NORMAL) != (not self.intervals):
            raise DataError(
                "class 'normal' requires an empty interval list and vice versa"
            )

    @property
    def length(self) -> int:
        return int(self.values.size)


def instance_to_record(instance: LabeledInstance) -> dict:
    """Serialize an instance to the JSONL record shape."""
    return {
        "id": instance.instance_id,
        "values": [float(v) for v in instance.values],
        "class": instance.anomaly_class.value,
        "intervals": [[iv.start, iv.end] for iv in instance.intervals],
        "seed": int(instance.seed),
    }


def record_to_instance(record: dict) -> LabeledInstance:
    """Deserialize a JSONL record, validating all invariants."""
    try:
        return LabeledInstance(
            instance_id=str(record["id"]),
            values=record["values"],
            anomaly_class=AnomalyClass.parse(record["class"]),
            intervals=tuple(Interval(int(s), int(e)) for s, e in record["intervals"]),
            seed=int(record.get("seed", 0)),
        )
    except KeyError as exc:
        raise DataError(f"instance record missing field {exc}") from exc


def dumps_record(record: dict) -> str:
    """Stable single-line JSON encoding used for all JSONL output."""
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))
