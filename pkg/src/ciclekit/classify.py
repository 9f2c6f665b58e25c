"""Neighborhood and baseline classifiers, grid search, span extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from .linear import LogisticRegressionOVR, _as_matrix
from .metrics import ConfusionMatrix, f1_report
from .tokenization import tokenize
from .validation import check_labels
from .vectorize import TextVectorizer, normalize_rows as _normalize_rows


class CosineKNN(BaseEstimator):
    """k-nearest-neighbors under cosine similarity with vote-share scores.

    Similarity ties pick the lower training index; prediction ties between
    classes go to whichever tied class owns the most similar neighbor.
    """

    def __init__(self, k: int = 4):
        self.k = k

    def fit(self, X, y, *, n_classes: int | None = None, n_features: int | None = None):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        X = _as_matrix(X, n_features)
        y = check_labels(y, n_classes)
        if X.shape[0] != len(y):
            raise ValueError("X and y disagree on sample count")
        if X.shape[0] < self.k:
            raise ValueError(f"need at least k={self.k} training points")
        self._train = _normalize_rows(X)
        self._y = y
        self.n_classes_ = n_classes if n_classes is not None else int(y.max()) + 1
        self.n_features_ = X.shape[1]
        return self

    def _neighbors(self, X) -> np.ndarray:
        check_is_fitted(self, "_train")
        queries = _normalize_rows(_as_matrix(X, self.n_features_))
        sims = (queries @ self._train.T).toarray()
        n_train = self._train.shape[0]
        out = np.empty((sims.shape[0], self.k), dtype=np.int64)
        for i in range(sims.shape[0]):
            order = np.lexsort((np.arange(n_train), -sims[i]))
            out[i] = order[: self.k]
        return out

    def predict_proba(self, X) -> np.ndarray:
        hoods = self._neighbors(X)
        proba = np.zeros((len(hoods), self.n_classes_))
        for i, hood in enumerate(hoods):
            votes = np.bincount(self._y[hood], minlength=self.n_classes_)
            proba[i] = votes / self.k
        return proba

    def predict(self, X) -> np.ndarray:
        hoods = self._neighbors(X)
        out = np.empty(len(hoods), dtype=np.int64)
        for i, hood in enumerate(hoods):
            votes = np.bincount(self._y[hood], minlength=self.n_classes_)
            top = votes.max()
            tied = set(np.flatnonzero(votes == top))
            if len(tied) == 1:
                out[i] = tied.pop()
            else:
                # walk neighbors from most similar until a tied class appears
                for idx in hood:
                    if int(self._y[idx]) in tied:
                        out[i] = int(self._y[idx])
                        break
        return out


class MajorityBaseline(BaseEstimator):
    """Always predicts the most frequent training class.

    With the label space sorted lexicographically, count ties resolve to
    the lexicographically smallest label.
    """

    def fit(self, X, y, *, n_classes: int | None = None, n_features: int | None = None):
        y = check_labels(y, n_classes)
        if len(y) == 0:
            raise ValueError("cannot fit on zero samples")
        counts = np.bincount(y, minlength=(n_classes or int(y.max()) + 1))
        self.majority_ = int(np.argmax(counts))
        self.n_classes_ = len(counts)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "majority_")
        n = X.shape[0] if hasattr(X, "shape") else len(X)
        return np.full(n, self.majority_, dtype=np.int64)


class RandomBaseline(BaseEstimator):
    """Predicts a fresh uniform class draw per sample.

    Each ``predict`` call restarts its generator from ``seed``, so a given
    input size always yields the same draw sequence.
    """

    def __init__(self, seed: int = 42):
        self.seed = seed

    def fit(self, X, y, *, n_classes: int | None = None, n_features: int | None = None):
        y = check_labels(y, n_classes)
        self.n_classes_ = n_classes if n_classes is not None else int(y.max()) + 1
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "n_classes_")
        n = X.shape[0] if hasattr(X, "shape") else len(X)
        rng = np.random.default_rng(self.seed)
        return rng.integers(0, self.n_classes_, size=n, dtype=np.int64)


@dataclass(frozen=True)
class GridPoint:
    params: dict
    score: float


@dataclass(frozen=True)
class GridSearchReport:
    metric: str
    points: tuple[GridPoint, ...]
    best_index: int

    @property
    def best_params(self) -> dict:
        return self.points[self.best_index].params

    @property
    def best_score(self) -> float:
        return self.points[self.best_index].score

    def to_json(self) -> str:
        return json.dumps(
            {
                "metric": self.metric,
                "points": [{"params": p.params, "score": p.score} for p in self.points],
                "best_index": self.best_index,
            },
            indent=2,
        )


def default_grid(kind: str) -> list[dict]:
    """Candidate hyperparameters per classifier family."""
    if kind == "knn":
        return [{"k": k} for k in (2, 4, 8)]
    if kind == "lr":
        return [{"C": c, "penalty": p} for p in ("l1", "l2") for c in (0.5, 1.0, 2.0)]
    if kind == "svm":
        return [{"C": c} for c in (0.5, 1.0, 2.0)]
    if kind in ("majority", "random"):
        return [{}]
    raise ValueError(f"unknown classifier kind {kind!r}")


def grid_search(
    estimator,
    param_grid,
    X_train,
    y_train,
    X_val,
    y_val,
    *,
    n_classes: int,
    n_features: int | None = None,
    metric: str = "macro_f1",
):
    """Fit one candidate per grid point; score on the validation block.

    Returns (report, fitted estimators). Ties keep the earliest grid point,
    so grid order is part of the contract.
    """
    if not param_grid:
        raise ValueError("param_grid must not be empty")
    y_val = check_labels(y_val, n_classes)
    points = []
    fitted = []
    for params in param_grid:
        candidate = clone(estimator).set_params(**params)
        candidate.fit(X_train, y_train, n_classes=n_classes, n_features=n_features)
        predictions = candidate.predict(X_val)
        cm = ConfusionMatrix.build(y_val, predictions, n_classes)
        score = getattr(f1_report(cm), metric)
        points.append(GridPoint(params=dict(params), score=float(score)))
        fitted.append(candidate)
    best = max(range(len(points)), key=lambda i: (points[i].score, -i))
    report = GridSearchReport(metric=metric, points=tuple(points), best_index=best)
    return report, fitted


def extract_spans(
    model: LogisticRegressionOVR,
    vectorizer: TextVectorizer,
    text: str,
    class_index: int,
) -> list[tuple[int, int]]:
    """Character spans of tokens that vote for ``class_index``.

    A token is informative when its stem has a strictly positive weight in
    the class's row of ``coef_``. Runs of adjacent informative tokens merge
    into a single span.
    """
    check_is_fitted(model, "coef_")
    if not 0 <= class_index < model.coef_.shape[0]:
        raise ValueError("class_index out of range")
    row = model.coef_[class_index]
    spans: list[tuple[int, int]] = []
    previous_kept = False
    for token in tokenize(text):
        col = vectorizer.vocabulary_.index(vectorizer._stemmer(token.surface))
        kept = col is not None and row[col] > 0
        if kept:
            if previous_kept:
                spans[-1] = (spans[-1][0], token.end)
            else:
                spans.append((token.start, token.end))
        previous_kept = kept
    return spans


def mean_classes_per_informative_token(model: LogisticRegressionOVR) -> float:
    """Average number of classes that an informative stem votes for."""
    check_is_fitted(model, "coef_")
    positive = model.coef_ > 0
    per_stem = positive.sum(axis=0)
    informative = per_stem[per_stem > 0]
    if len(informative) == 0:
        return 0.0
    return float(informative.mean())
