"""One-vs-rest linear classifiers trained by first-order descent.

Both models minimize an averaged objective

    F(w, b) = mean_i loss(t_i (x_i . w + b)) + penalty(w) / (C * n)

with loss either logistic or hinge and penalty either squared L2 (halved)
or L1. Dividing the penalty by n keeps F equal to 1/n times the familiar
"sum of losses plus 1/(2C) ||w||^2" objective, so C has the usual
per-sample meaning while the stopping rules see a sample-size-free scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .validation import check_labels
from .vectorize import FeatureVector, to_csr


@dataclass(frozen=True)
class TrainConfig:
    """Solver settings shared by the linear models."""

    penalty: str = "l2"
    C: float = 1.0
    max_epochs: int = 500
    tol: float = 1e-6
    seed: int = 42

    def __post_init__(self) -> None:
        if self.penalty not in ("l1", "l2"):
            raise ValueError(f"penalty must be 'l1' or 'l2', got {self.penalty!r}")
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


def _as_matrix(X, n_features: int | None) -> sparse.csr_matrix:
    if sparse.issparse(X):
        return X.tocsr()
    if isinstance(X, np.ndarray):
        return sparse.csr_matrix(X)
    if isinstance(X, (list, tuple)) and all(isinstance(v, FeatureVector) for v in X):
        if n_features is None:
            raise ValueError("n_features is required when passing FeatureVector lists")
        return to_csr(list(X), n_features)
    raise TypeError(f"unsupported input type {type(X).__name__}")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log1pexp(z: np.ndarray) -> np.ndarray:
    """log(1 + exp(z)) without overflow."""
    out = np.empty_like(z)
    pos = z > 0
    out[pos] = z[pos] + np.log1p(np.exp(-z[pos]))
    out[~pos] = np.log1p(np.exp(z[~pos]))
    return out


def logistic_objective(wb: np.ndarray, X: sparse.csr_matrix, t: np.ndarray, C: float,
                       penalty: str = "l2") -> tuple[float, np.ndarray]:
    """Mean logistic loss plus optional L2 term, with its gradient.

    ``wb`` packs the weight vector and a trailing intercept; ``t`` holds
    +1/-1 targets. With ``penalty="none"`` only the smooth part is
    returned, which is what the proximal L1 solver needs.
    """
    n = X.shape[0]
    w, b = wb[:-1], wb[-1]
    margins = t * (X @ w + b)
    value = float(np.mean(_log1pexp(-margins)))
    slope = -t * _sigmoid(-margins) / n
    grad_w = X.T @ slope
    grad_b = float(slope.sum())
    if penalty == "l2":
        value += float(w @ w) / (2.0 * C * n)
        grad_w = grad_w + w / (C * n)
    elif penalty != "none":
        raise ValueError(f"unsupported penalty {penalty!r} for a smooth objective")
    return value, np.concatenate([grad_w, [grad_b]])


def hinge_objective(wb: np.ndarray, X: sparse.csr_matrix, t: np.ndarray,
                    C: float) -> tuple[float, np.ndarray]:
    """Mean hinge loss plus the L2 term, with a deterministic subgradient."""
    n = X.shape[0]
    w, b = wb[:-1], wb[-1]
    margins = t * (X @ w + b)
    gaps = 1.0 - margins
    value = float(np.mean(np.maximum(gaps, 0.0)))
    slope = np.where(gaps > 0, -t, 0.0) / n
    grad_w = X.T @ slope + w / (C * n)
    grad_b = float(slope.sum())
    value += float(w @ w) / (2.0 * C * n)
    return value, np.concatenate([grad_w, [grad_b]])


def _descent(objective, x0: np.ndarray, max_epochs: int, tol: float) -> tuple[np.ndarray, list[float]]:
    """Gradient descent with backtracking line search; history never rises."""
    x = x0
    value, grad = objective(x)
    history = [value]
    eta = 1.0
    for _ in range(max_epochs):
        gnorm2 = float(grad @ grad)
        if np.sqrt(gnorm2) <= tol:
            break
        accepted = False
        while eta >= 1e-14:
            candidate = x - eta * grad
            cand_value, cand_grad = objective(candidate)
            if cand_value <= value - 1e-4 * eta * gnorm2:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
        drop = value - cand_value
        x, value, grad = candidate, cand_value, cand_grad
        history.append(value)
        if drop <= tol * max(1.0, abs(value)):
            break
        eta = min(eta * 2.0, 1e6)
    return x, history


def _soft_threshold(z: np.ndarray, radius: float) -> np.ndarray:
    return np.sign(z) * np.maximum(np.abs(z) - radius, 0.0)


def _proximal_descent(smooth, x0: np.ndarray, reg: float, max_epochs: int,
                      tol: float) -> tuple[np.ndarray, list[float]]:
    """ISTA with backtracking; the intercept (last entry) is unpenalized."""

    def total(x: np.ndarray, smooth_value: float) -> float:
        return smooth_value + reg * float(np.abs(x[:-1]).sum())

    x = x0
    value, grad = smooth(x)
    history = [total(x, value)]
    eta = 1.0
    for _ in range(max_epochs):
        accepted = False
        while eta >= 1e-14:
            candidate = x - eta * grad
            candidate[:-1] = _soft_threshold(candidate[:-1], eta * reg)
            delta = candidate - x
            cand_value, cand_grad = smooth(candidate)
            bound = value + float(grad @ delta) + float(delta @ delta) / (2.0 * eta)
            if cand_value <= bound + 1e-12:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
        residual = float(np.max(np.abs(delta))) / eta if len(delta) else 0.0
        prev_total = history[-1]
        x, value, grad = candidate, cand_value, cand_grad
        history.append(total(x, value))
        if residual <= tol or prev_total - history[-1] <= tol * max(1.0, abs(history[-1])):
            break
        eta = min(eta * 2.0, 1e6)
    return x, history


def _prior_intercept(n_pos: int, n: int) -> float:
    # Laplace-smoothed so single-sign classes stay finite
    p = (n_pos + 1.0) / (n + 2.0)
    return float(np.log(p / (1.0 - p)))


class LogisticRegressionOVR(BaseEstimator):
    """One-vs-rest logistic regression on sparse features.

    Per-class sigmoid scores are renormalized to sum to one, which keeps
    the argmax of the raw scores. A class with no positive (or no
    negative) examples trains to a bias-only prior model.

    Parameters
    ----------
    C : float
        Inverse regularization strength, per-sample semantics.
    penalty : {"l2", "l1"}
        L2 runs plain backtracking descent; L1 runs proximal descent and
        yields sparse rows in ``coef_``.
    """

    def __init__(self, C: float = 1.0, penalty: str = "l2", max_epochs: int = 500,
                 tol: float = 1e-6, seed: int = 42):
        self.C = C
        self.penalty = penalty
        self.max_epochs = max_epochs
        self.tol = tol
        self.seed = seed

    def fit(self, X, y, *, n_classes: int | None = None, n_features: int | None = None):
        config = TrainConfig(penalty=self.penalty, C=self.C, max_epochs=self.max_epochs,
                             tol=self.tol, seed=self.seed)
        X = _as_matrix(X, n_features)
        y = check_labels(y, n_classes)
        if X.shape[0] != len(y):
            raise ValueError("X and y disagree on sample count")
        if X.shape[0] == 0:
            raise ValueError("cannot fit on zero samples")
        m = n_classes if n_classes is not None else int(y.max()) + 1
        n, d = X.shape
        self.coef_ = np.zeros((m, d))
        self.intercept_ = np.zeros(m)
        self.loss_histories_ = []
        for c in range(m):
            t = np.where(y == c, 1.0, -1.0)
            n_pos = int((t > 0).sum())
            if n_pos == 0 or n_pos == n:
                self.intercept_[c] = _prior_intercept(n_pos, n)
                wb = np.concatenate([self.coef_[c], [self.intercept_[c]]])
                value, _ = logistic_objective(wb, X, t, config.C,
                                              "l2" if config.penalty == "l2" else "none")
                self.loss_histories_.append([value])
                continue
            x0 = np.zeros(d + 1)
            if config.penalty == "l2":
                wb, history = _descent(
                    lambda v: logistic_objective(v, X, t, config.C, "l2"),
                    x0, config.max_epochs, config.tol,
                )
            else:
                wb, history = _proximal_descent(
                    lambda v: logistic_objective(v, X, t, config.C, "none"),
                    x0, 1.0 / (config.C * n), config.max_epochs, config.tol,
                )
            self.coef_[c] = wb[:-1]
            self.intercept_[c] = wb[-1]
            self.loss_histories_.append(history)
        self.n_classes_ = m
        self.n_features_ = d
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "coef_")
        X = _as_matrix(X, self.n_features_)
        return np.asarray(X @ self.coef_.T) + self.intercept_

    def predict_proba(self, X) -> np.ndarray:
        scores = _sigmoid(self.decision_function(X))
        return scores / scores.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)


class LinearSVMOVR(BaseEstimator):
    """One-vs-rest linear SVM; produces margins, never probabilities.

    Trained by subgradient descent with the same backtracking acceptance
    rule as the logistic model. Exact hinge kinks can stall the line
    search early; in practice float margins never sit exactly at 1.
    """

    def __init__(self, C: float = 1.0, max_epochs: int = 500, tol: float = 1e-6,
                 seed: int = 42):
        self.C = C
        self.max_epochs = max_epochs
        self.tol = tol
        self.seed = seed

    def fit(self, X, y, *, n_classes: int | None = None, n_features: int | None = None):
        config = TrainConfig(penalty="l2", C=self.C, max_epochs=self.max_epochs,
                             tol=self.tol, seed=self.seed)
        X = _as_matrix(X, n_features)
        y = check_labels(y, n_classes)
        if X.shape[0] != len(y):
            raise ValueError("X and y disagree on sample count")
        if X.shape[0] == 0:
            raise ValueError("cannot fit on zero samples")
        m = n_classes if n_classes is not None else int(y.max()) + 1
        n, d = X.shape
        self.coef_ = np.zeros((m, d))
        self.intercept_ = np.zeros(m)
        self.loss_histories_ = []
        for c in range(m):
            t = np.where(y == c, 1.0, -1.0)
            wb, history = _descent(
                lambda v: hinge_objective(v, X, t, config.C),
                np.zeros(d + 1), config.max_epochs, config.tol,
            )
            self.coef_[c] = wb[:-1]
            self.intercept_[c] = wb[-1]
            self.loss_histories_.append(history)
        self.n_classes_ = m
        self.n_features_ = d
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "coef_")
        X = _as_matrix(X, self.n_features_)
        return np.asarray(X @ self.coef_.T) + self.intercept_

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)


def model_to_json(model) -> str:
    """Serialize a fitted linear model with full-precision weights."""
    check_is_fitted(model, "coef_")
    kind = "logistic" if isinstance(model, LogisticRegressionOVR) else "svm"
    return json.dumps(
        {
            "kind": kind,
            "params": model.get_params(),
            "coef": [row.tolist() for row in model.coef_],
            "intercept": model.intercept_.tolist(),
        }
    )


def model_from_json(text: str):
    obj = json.loads(text)
    cls = {"logistic": LogisticRegressionOVR, "svm": LinearSVMOVR}[obj["kind"]]
    model = cls(**obj["params"])
    model.coef_ = np.asarray(obj["coef"], dtype=np.float64)
    model.intercept_ = np.asarray(obj["intercept"], dtype=np.float64)
    model.n_classes_ = model.coef_.shape[0]
    model.n_features_ = model.coef_.shape[1]
    model.loss_histories_ = []
    return model
