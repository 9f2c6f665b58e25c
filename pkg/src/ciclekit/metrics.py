"""Evaluation: confusion counts, F1 variants, fold aggregation, telemetry.

Predictions are class indices; the sentinel -1 marks a parse failure, which
is tracked in a dedicated confusion column so it can count against recall
without polluting any real class's precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .validation import check_labels

FAILURE = -1


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with shape (n_classes, n_classes + 1); last column is failures."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[1] != counts.shape[0] + 1:
            raise ValueError("confusion counts must have shape (M, M + 1)")
        if counts.size and counts.min() < 0:
            raise ValueError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @classmethod
    def build(cls, y_true, y_pred, n_classes: int) -> "ConfusionMatrix":
        y_true = check_labels(y_true, n_classes)
        y_pred = np.asarray(y_pred, dtype=np.int64)
        if y_pred.ndim != 1 or len(y_pred) != len(y_true):
            raise ValueError("y_pred must be 1-d and parallel to y_true")
        if len(y_pred) and (y_pred.min() < FAILURE or y_pred.max() >= n_classes):
            raise ValueError("predictions must be class indices or the failure sentinel")
        counts = np.zeros((n_classes, n_classes + 1), dtype=np.int64)
        for t, p in zip(y_true, y_pred):
            counts[t, n_classes if p == FAILURE else p] += 1
        return cls(counts)

    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def n_samples(self) -> int:
        return int(self.counts.sum())


def per_class_scores(cm: ConfusionMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class precision, recall and F1, with 0/0 scored as 0."""
    m = cm.n_classes
    tp = np.diag(cm.counts[:, :m]).astype(np.float64)
    predicted = cm.counts[:, :m].sum(axis=0).astype(np.float64)
    support = cm.support().astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    return precision, recall, f1


@dataclass(frozen=True)
class MetricsReport:
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    accuracy: float
    n_samples: int
    classes: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f1": self.micro_f1,
            "accuracy": self.accuracy,
            "n_samples": self.n_samples,
            "classes": list(self.classes),
        }


def f1_report(cm: ConfusionMatrix, subset: Iterable[int] | None = None) -> MetricsReport:
    """Macro and micro scores, optionally restricted to a class subset.

    Macro averages the per-class F1 of the subset's classes, each computed
    from the full matrix. Micro sums true-positive, predicted and gold
    counts over the subset; parse failures count against recall only.
    """
    m = cm.n_classes
    classes = tuple(sorted(set(range(m)) if subset is None else {int(c) for c in subset}))
    if any(not 0 <= c < m for c in classes):
        raise ValueError("subset contains out-of-range class indices")
    precision, recall, f1 = per_class_scores(cm)
    sel = np.array(classes, dtype=np.int64)

    tp = np.diag(cm.counts[:, :m]).astype(np.float64)
    predicted = cm.counts[:, :m].sum(axis=0).astype(np.float64)
    support = cm.support().astype(np.float64)
    sum_tp = tp[sel].sum()
    sum_pred = predicted[sel].sum()
    sum_support = support[sel].sum()
    micro_p = sum_tp / sum_pred if sum_pred > 0 else 0.0
    micro_r = sum_tp / sum_support if sum_support > 0 else 0.0
    micro_f1 = 2 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r > 0 else 0.0

    n = cm.n_samples()
    return MetricsReport(
        macro_precision=float(precision[sel].mean()) if len(sel) else 0.0,
        macro_recall=float(recall[sel].mean()) if len(sel) else 0.0,
        macro_f1=float(f1[sel].mean()) if len(sel) else 0.0,
        micro_precision=float(micro_p),
        micro_recall=float(micro_r),
        micro_f1=float(micro_f1),
        accuracy=float(tp.sum() / n) if n else 0.0,
        n_samples=n,
        classes=classes,
    )


@dataclass(frozen=True)
class FoldAggregate:
    mean: float
    best: float
    deviation: float


def aggregate_folds(values: Sequence[float]) -> FoldAggregate:
    """Mean, max and mean absolute deviation of a per-fold metric."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("need at least one fold value")
    mean = float(arr.mean())
    return FoldAggregate(mean=mean, best=float(arr.max()), deviation=float(np.abs(arr - mean).mean()))


def aggregate_reports(reports: Sequence[MetricsReport], metric: str = "macro_f1") -> FoldAggregate:
    return aggregate_folds([getattr(r, metric) for r in reports])


@dataclass(frozen=True)
class TelemetryReport:
    """Prompt-cost summary for one strategy run.

    Means are over prompted samples only; bypassed samples count toward
    usage but have no prompt to measure.
    """

    n_samples: int
    n_prompted: int
    n_bypassed: int
    n_parse_failures: int
    llm_usage: float
    mean_prompt_chars: float
    mean_classes_per_prompt: float
    mean_shots_per_class: float
    failure_rate: float

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_prompted": self.n_prompted,
            "n_bypassed": self.n_bypassed,
            "n_parse_failures": self.n_parse_failures,
            "llm_usage": self.llm_usage,
            "mean_prompt_chars": self.mean_prompt_chars,
            "mean_classes_per_prompt": self.mean_classes_per_prompt,
            "mean_shots_per_class": self.mean_shots_per_class,
            "failure_rate": self.failure_rate,
        }


def telemetry_report(samples: Sequence) -> TelemetryReport:
    """Summarize per-sample telemetry entries (see llm.SampleTelemetry)."""
    n = len(samples)
    prompted = [s for s in samples if not s.bypassed]
    n_prompted = len(prompted)
    n_bypassed = n - n_prompted
    n_fail = sum(1 for s in prompted if s.parse_failed)

    def mean(values) -> float:
        values = list(values)
        return float(np.mean(values)) if values else 0.0

    return TelemetryReport(
        n_samples=n,
        n_prompted=n_prompted,
        n_bypassed=n_bypassed,
        n_parse_failures=n_fail,
        llm_usage=n_prompted / n if n else 0.0,
        mean_prompt_chars=mean(s.prompt_chars for s in prompted),
        mean_classes_per_prompt=mean(s.classes_in_prompt for s in prompted),
        mean_shots_per_class=mean(
            s.shots / s.classes_in_prompt for s in prompted if s.classes_in_prompt
        ),
        failure_rate=n_fail / n_prompted if n_prompted else 0.0,
    )


def cohen_kappa(y1, y2) -> float:
    """Chance-corrected agreement between two labelings of the same items."""
    a = np.asarray(y1)
    b = np.asarray(y2)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("labelings must be parallel 1-d sequences")
    if len(a) == 0:
        raise ValueError("need at least one item")
    po = float(np.mean(a == b))
    values = np.unique(np.concatenate([a, b]))
    pe = 0.0
    for v in values:
        pe += float(np.mean(a == v)) * float(np.mean(b == v))
    if pe >= 1.0:
        return 1.0 if po == 1.0 else 0.0
    return (po - pe) / (1.0 - pe)


def save_report(report: MetricsReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
