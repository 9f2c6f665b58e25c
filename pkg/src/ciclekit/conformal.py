"""Split conformal prediction over class-probability scores.

Calibration uses the nonconformity score 1 - p(true class). The quantile
level is ceil((N + 1) * (1 - alpha)) / N, clamped to 1, and the threshold
q_hat is the corresponding order statistic of the calibration scores. A
test sample's prediction set keeps every class j with p_j >= 1 - q_hat;
the guarantee is that the true class lands in the set with probability at
least 1 - alpha over exchangeable data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .validation import check_labels, check_proba_matrix


@dataclass(frozen=True)
class PredictionSet:
    """Classes ordered by descending probability, plus a fallback flag.

    ``fallback`` marks the empty-set repair: when no class clears the
    threshold, the argmax class is returned alone so downstream stages
    always have a candidate.
    """

    classes: tuple[int, ...]
    probabilities: tuple[float, ...]
    fallback: bool = False

    def __post_init__(self) -> None:
        if len(self.classes) != len(self.probabilities):
            raise ValueError("classes and probabilities must be parallel")
        if len(self.classes) == 0:
            raise ValueError("prediction sets are never empty; use the fallback")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("classes must be distinct")
        if any(self.probabilities[i] < self.probabilities[i + 1]
               for i in range(len(self.probabilities) - 1)):
            raise ValueError("probabilities must be non-increasing")

    def __len__(self) -> int:
        return len(self.classes)

    def __contains__(self, class_index: int) -> bool:
        return class_index in self.classes

    @property
    def is_singleton(self) -> bool:
        return len(self.classes) == 1


def quantile_rank(n_cal: int, alpha: float) -> int:
    """1-based order statistic index for the calibration quantile.

    Computed as ceil((n + 1) * (1 - alpha)) with a small slack so exact
    integers survive float rounding, then clamped into 1..n.
    """
    if n_cal < 1:
        raise ValueError("need at least one calibration sample")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    rank = int(np.ceil((n_cal + 1) * (1.0 - alpha) - 1e-9))
    return max(1, min(rank, n_cal))


class ConformalCalibrator(BaseEstimator):
    """Split conformal calibrator for any base model with predict_proba.

    Parameters
    ----------
    alpha : float
        Miscoverage budget; sets carry probability at least 1 - alpha of
        containing the true class.
    """

    def __init__(self, alpha: float = 0.05):
        self.alpha = alpha

    def fit(self, proba, y, fingerprint: str | None = None) -> "ConformalCalibrator":
        P = check_proba_matrix(proba)
        y = check_labels(y, P.shape[1])
        if len(y) != P.shape[0]:
            raise ValueError("proba and y disagree on sample count")
        if len(y) == 0:
            raise ValueError("need at least one calibration sample")
        scores = 1.0 - P[np.arange(len(y)), y]
        rank = quantile_rank(len(y), self.alpha)
        self.q_hat_ = float(np.sort(scores)[rank - 1])
        self.n_cal_ = len(y)
        self.n_classes_ = P.shape[1]
        self.fingerprint_ = fingerprint
        return self

    def predict_set(self, proba_row) -> PredictionSet:
        check_is_fitted(self, "q_hat_")
        p = np.asarray(proba_row, dtype=np.float64).ravel()
        if len(p) != self.n_classes_:
            raise ValueError(f"expected {self.n_classes_} class probabilities, got {len(p)}")
        threshold = 1.0 - self.q_hat_
        members = np.flatnonzero(p >= threshold)
        if len(members) == 0:
            best = int(np.argmax(p))
            return PredictionSet(classes=(best,), probabilities=(float(p[best]),), fallback=True)
        order = members[np.lexsort((members, -p[members]))]
        return PredictionSet(
            classes=tuple(int(c) for c in order),
            probabilities=tuple(float(p[c]) for c in order),
            fallback=False,
        )

    def predict_sets(self, proba) -> list[PredictionSet]:
        P = check_proba_matrix(proba, self.n_classes_)
        return [self.predict_set(P[i]) for i in range(P.shape[0])]

    def to_json(self) -> str:
        check_is_fitted(self, "q_hat_")
        return json.dumps(
            {
                "alpha": self.alpha,
                "q_hat": self.q_hat_,
                "n_cal": self.n_cal_,
                "n_classes": self.n_classes_,
                "fingerprint": self.fingerprint_,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ConformalCalibrator":
        obj = json.loads(text)
        cal = cls(alpha=float(obj["alpha"]))
        cal.q_hat_ = float(obj["q_hat"])
        cal.n_cal_ = int(obj["n_cal"])
        cal.n_classes_ = int(obj["n_classes"])
        cal.fingerprint_ = obj.get("fingerprint")
        return cal


def empirical_coverage(calibrator: ConformalCalibrator, proba, y) -> float:
    """Fraction of samples whose true class lies in the returned set."""
    P = check_proba_matrix(proba, calibrator.n_classes_)
    y = check_labels(y, calibrator.n_classes_)
    if len(y) != P.shape[0]:
        raise ValueError("proba and y disagree on sample count")
    hits = sum(1 for i in range(len(y)) if int(y[i]) in calibrator.predict_set(P[i]))
    return hits / len(y) if len(y) else 0.0


def mean_set_size(calibrator: ConformalCalibrator, proba) -> float:
    P = check_proba_matrix(proba, calibrator.n_classes_)
    sizes = [len(calibrator.predict_set(P[i])) for i in range(P.shape[0])]
    return float(np.mean(sizes)) if sizes else 0.0
