"""Input-validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np


def check_labels(y, n_classes: int | None = None) -> np.ndarray:
    """Coerce class indices to a 1-d int64 array, optionally bounds-checked."""
    y = np.asarray(y, dtype=np.int64)
    if y.ndim != 1:
        raise ValueError(f"labels must be 1-d, got shape {y.shape}")
    if len(y) and y.min() < 0:
        raise ValueError("labels must be non-negative class indices")
    if n_classes is not None and len(y) and y.max() >= n_classes:
        raise ValueError(f"label {int(y.max())} out of range for {n_classes} classes")
    return y


def check_proba_matrix(P, n_classes: int | None = None, atol: float = 1e-6) -> np.ndarray:
    """Validate an (n_samples, n_classes) matrix of per-class probabilities."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim == 1:
        P = P.reshape(1, -1)
    if P.ndim != 2:
        raise ValueError(f"probability matrix must be 2-d, got shape {P.shape}")
    if n_classes is not None and P.shape[1] != n_classes:
        raise ValueError(f"expected {n_classes} columns, got {P.shape[1]}")
    if not np.all(np.isfinite(P)):
        raise ValueError("probabilities must be finite")
    if P.size and (P.min() < -atol or P.max() > 1 + atol):
        raise ValueError("probabilities must lie in [0, 1]")
    sums = P.sum(axis=1)
    if P.size and not np.allclose(sums, 1.0, atol=atol):
        raise ValueError("probability rows must sum to 1")
    return P


def check_texts(X) -> list[str]:
    out = list(X)
    if not all(isinstance(t, str) for t in out):
        raise TypeError("expected an iterable of strings")
    return out
