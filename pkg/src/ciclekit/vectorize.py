"""Sparse bag-of-words and tf-idf features over stemmed tokens.

Tokens come from the Treebank tokenizer, stems from the Porter stemmer.
Every stem observed in the fitted corpus gets a column; nothing is pruned,
digits and punctuation tokens included. Unknown stems at transform time
are dropped, so a text can legally map to the empty vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .stemming import PorterStemmer
from .tokenization import tokenize
from .validation import check_texts


@dataclass(frozen=True)
class FeatureVector:
    """One document as parallel (column index, weight) arrays.

    Indices are strictly increasing; weights are finite and strictly
    positive, so the empty vector is the all-zeros document.
    """

    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        indices = np.asarray(self.indices, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if indices.ndim != 1 or weights.ndim != 1 or len(indices) != len(weights):
            raise ValueError("indices and weights must be parallel 1-d arrays")
        if len(indices) and np.any(np.diff(indices) <= 0):
            raise ValueError("indices must be strictly increasing")
        if len(indices) and indices[0] < 0:
            raise ValueError("indices must be non-negative")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise ValueError("weights must be finite and strictly positive")
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "weights", weights)

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.weights, self.weights)))

    def dot(self, other: "FeatureVector") -> float:
        if self.nnz == 0 or other.nnz == 0:
            return 0.0
        common, left, right = np.intersect1d(
            self.indices, other.indices, assume_unique=True, return_indices=True
        )
        if len(common) == 0:
            return 0.0
        return float(np.dot(self.weights[left], other.weights[right]))


def cosine_similarity(a: FeatureVector, b: FeatureVector) -> float:
    """Cosine of two sparse vectors; zero whenever either vector is zero."""
    na, nb = a.norm(), b.norm()
    if na == 0.0 or nb == 0.0:
        return 0.0
    return a.dot(b) / (na * nb)


def to_csr(vectors: list[FeatureVector], n_features: int) -> sparse.csr_matrix:
    """Stack feature vectors into one CSR matrix for the linear solvers."""
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    for i, vec in enumerate(vectors):
        indptr[i + 1] = indptr[i] + vec.nnz
    indices = np.concatenate([v.indices for v in vectors]) if vectors else np.zeros(0, dtype=np.int64)
    data = np.concatenate([v.weights for v in vectors]) if vectors else np.zeros(0)
    return sparse.csr_matrix((data, indices, indptr), shape=(len(vectors), n_features))


def normalize_rows(X: sparse.csr_matrix) -> sparse.csr_matrix:
    """Scale each row to unit L2 norm; zero rows stay zero."""
    X = X.tocsr().astype(np.float64)
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    scale = np.zeros_like(norms)
    scale[norms > 0] = 1.0 / norms[norms > 0]
    return sparse.diags(scale) @ X


@dataclass(frozen=True)
class Vocabulary:
    """Stem-to-column mapping with document frequencies."""

    stems: tuple[str, ...]
    doc_freq: tuple[int, ...]
    n_docs: int

    def __post_init__(self) -> None:
        if list(self.stems) != sorted(self.stems):
            raise ValueError("stems must be lexicographically sorted")
        if len(self.stems) != len(set(self.stems)):
            raise ValueError("stems must be distinct")
        if len(self.doc_freq) != len(self.stems):
            raise ValueError("doc_freq must align with stems")
        if any(not (0 < df <= self.n_docs) for df in self.doc_freq):
            raise ValueError("document frequencies must lie in 1..n_docs")

    def __len__(self) -> int:
        return len(self.stems)

    def index(self, stem: str) -> int | None:
        try:
            return self._index.get(stem)
        except AttributeError:
            object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.stems)})
            return self._index.get(stem)


class TextVectorizer(BaseEstimator):
    """Tokenize, stem and embed texts as sparse vectors.

    Parameters
    ----------
    mode : {"tfidf", "bow"}
        "bow" emits raw in-document term counts. "tfidf" weighs counts by
        ln(n_docs / doc_freq) and scales each document to unit L2 norm.
    """

    def __init__(self, mode: str = "tfidf"):
        self.mode = mode

    def _stems(self, text: str) -> list[str]:
        return [self._stemmer(tok.surface) for tok in tokenize(text)]

    def fit(self, X, y=None) -> "TextVectorizer":
        if self.mode not in ("tfidf", "bow"):
            raise ValueError(f"unknown mode {self.mode!r}")
        texts = check_texts(X)
        if not texts:
            raise ValueError("cannot fit on an empty corpus")
        self._stemmer = PorterStemmer()
        df: dict[str, int] = {}
        for text in texts:
            for stem in set(self._stems(text)):
                df[stem] = df.get(stem, 0) + 1
        stems = tuple(sorted(df))
        self.vocabulary_ = Vocabulary(
            stems=stems,
            doc_freq=tuple(df[s] for s in stems),
            n_docs=len(texts),
        )
        self.idf_ = np.log(len(texts) / np.asarray(self.vocabulary_.doc_freq, dtype=np.float64))
        return self

    def transform_one(self, text: str) -> FeatureVector:
        check_is_fitted(self, "vocabulary_")
        counts: dict[int, float] = {}
        for stem in self._stems(text):
            col = self.vocabulary_.index(stem)
            if col is not None:
                counts[col] = counts.get(col, 0.0) + 1.0
        if not counts:
            return FeatureVector(np.zeros(0, dtype=np.int64), np.zeros(0))
        indices = np.array(sorted(counts), dtype=np.int64)
        weights = np.array([counts[i] for i in indices], dtype=np.float64)
        if self.mode == "tfidf":
            weights = weights * self.idf_[indices]
            keep = weights > 0
            indices, weights = indices[keep], weights[keep]
            norm = np.sqrt(np.dot(weights, weights))
            if norm > 0:
                weights = weights / norm
        return FeatureVector(indices, weights)

    def transform(self, X) -> list[FeatureVector]:
        return [self.transform_one(t) for t in check_texts(X)]

    def fit_transform(self, X, y=None) -> list[FeatureVector]:
        return self.fit(X).transform(X)

    @property
    def n_features_(self) -> int:
        check_is_fitted(self, "vocabulary_")
        return len(self.vocabulary_)

    def to_json(self) -> str:
        check_is_fitted(self, "vocabulary_")
        return json.dumps(
            {
                "mode": self.mode,
                "n_docs": self.vocabulary_.n_docs,
                "stems": list(self.vocabulary_.stems),
                "doc_freq": list(self.vocabulary_.doc_freq),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "TextVectorizer":
        obj = json.loads(text)
        vec = cls(mode=obj["mode"])
        vec._stemmer = PorterStemmer()
        vec.vocabulary_ = Vocabulary(
            stems=tuple(obj["stems"]),
            doc_freq=tuple(int(d) for d in obj["doc_freq"]),
            n_docs=int(obj["n_docs"]),
        )
        vec.idf_ = np.log(vec.vocabulary_.n_docs / np.asarray(vec.vocabulary_.doc_freq, dtype=np.float64))
        return vec
