"""Time-series anomaly tooling: synthetic corpora, probe-backed expert
reasoning traces, transport-refined group advantages, and affinity-based
evaluation."""

__version__ = "0.1.0"

from .core import (
    ANOMALY_CLASSES,
    AnomalyClass,
    Interval,
    LabeledInstance,
    intervals_to_labels,
    labels_to_intervals,
    normalize_intervals,
)

__all__ = [
    "ANOMALY_CLASSES",
    "AnomalyClass",
    "Interval",
    "LabeledInstance",
    "intervals_to_labels",
    "labels_to_intervals",
    "normalize_intervals",
    "__version__",
]
