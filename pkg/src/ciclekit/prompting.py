"""Few-shot prompt construction over similarity-ranked training examples.

Four strategies share one shot pool:

* all      - up to two most-similar shots from every class
* sim      - the k globally most similar shots from the all-pool
* max      - two shots each from the k classes the base model rates highest
* cicle    - max-style shots over the conformal prediction set; a singleton
             set skips the prompt entirely and returns the class directly

Rendering is one task-description line, one line per shot in the form
"<text>" => <label>, and a final "<query>" =>  line for the model to
complete.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .conformal import PredictionSet
from .corpus import LabelSpace
from .validation import check_labels
from .vectorize import FeatureVector, normalize_rows, to_csr

HAZARD_TASK_DESCRIPTION = (
    "We are looking for food hazards in texts. "
    "Please predict the correct class for the following sample:"
)
PRODUCT_TASK_DESCRIPTION = (
    "We are looking for food products in texts. "
    "Please predict the correct class for the following sample:"
)
DEFAULT_TASK_DESCRIPTIONS = {
    "hazard": HAZARD_TASK_DESCRIPTION,
    "hazard-category": HAZARD_TASK_DESCRIPTION,
    "product": PRODUCT_TASK_DESCRIPTION,
    "product-category": PRODUCT_TASK_DESCRIPTION,
}

STRATEGIES = ("all", "sim", "max", "cicle")


@dataclass(frozen=True)
class FewShot:
    """One in-context example and how it was chosen."""

    text: str
    label: str
    similarity: float
    train_index: int
    class_probability: float | None = None


@dataclass(frozen=True)
class PromptSpec:
    """A fully determined prompt: shots in final order plus the rendering."""

    strategy: str
    task_description: str
    shots: tuple[FewShot, ...]
    query: str
    rendered: str

    @property
    def n_chars(self) -> int:
        return len(self.rendered)

    @property
    def n_shots(self) -> int:
        return len(self.shots)

    @property
    def n_classes(self) -> int:
        return len({s.label for s in self.shots})


@dataclass(frozen=True)
class Bypass:
    """Singleton conformal set: the answer skips the language model."""

    label: str
    class_index: int
    probability: float


PromptOutcome = Union[Bypass, PromptSpec]


def render(task_description: str, shots: Sequence[FewShot], query: str) -> str:
    lines = [task_description]
    for shot in shots:
        lines.append(f'"{shot.text}" => {shot.label}')
    lines.append(f'"{query}" => ')
    return "\n".join(lines)


class PromptBuilder:
    """Builds prompts from a fixed training pool and a shared vectorizer.

    The builder is immutable after construction; every build method is a
    pure function of the query (and, for max and cicle, the base model's
    class probabilities).
    """

    def __init__(
        self,
        train_texts: Sequence[str],
        train_vectors: Sequence[FeatureVector],
        train_labels,
        label_space: LabelSpace,
        task_description: str,
        n_features: int,
        shots_per_class: int = 2,
    ):
        if len(train_texts) != len(train_vectors) or len(train_texts) != len(train_labels):
            raise ValueError("texts, vectors and labels must be parallel")
        if shots_per_class < 1:
            raise ValueError("shots_per_class must be at least 1")
        self.texts = list(train_texts)
        self.labels = check_labels(train_labels, len(label_space))
        self.label_space = label_space
        self.task_description = task_description
        self.shots_per_class = shots_per_class
        self._matrix = normalize_rows(to_csr(list(train_vectors), n_features))
        self._members = [
            np.flatnonzero(self.labels == c) for c in range(len(label_space))
        ]
        self._n_features = n_features

    def _similarities(self, query_vec: FeatureVector) -> np.ndarray:
        q = normalize_rows(to_csr([query_vec], self._n_features))
        return (self._matrix @ q.T).toarray().ravel()

    def _best_of_class(self, sims: np.ndarray, class_index: int) -> list[int]:
        members = self._members[class_index]
        if len(members) == 0:
            return []
        order = members[np.lexsort((members, -sims[members]))]
        return [int(i) for i in order[: self.shots_per_class]]

    def _shot(self, index: int, sims: np.ndarray, class_probability: float | None = None) -> FewShot:
        return FewShot(
            text=self.texts[index],
            label=self.label_space.labels[int(self.labels[index])],
            similarity=float(sims[index]),
            train_index=index,
            class_probability=class_probability,
        )

    def _spec(self, strategy: str, shots: Sequence[FewShot], query: str) -> PromptSpec:
        rendered = render(self.task_description, shots, query)
        return PromptSpec(
            strategy=strategy,
            task_description=self.task_description,
            shots=tuple(shots),
            query=query,
            rendered=rendered,
        )

    def _all_pool(self, sims: np.ndarray) -> list[int]:
        pool: list[int] = []
        for c in range(len(self.label_space)):
            pool.extend(self._best_of_class(sims, c))
        pool.sort(key=lambda i: (-sims[i], i))
        return pool

    def build_all(self, query: str, query_vec: FeatureVector) -> PromptSpec:
        """Every class shows up, most similar shots first globally."""
        sims = self._similarities(query_vec)
        shots = [self._shot(i, sims) for i in self._all_pool(sims)]
        return self._spec("all", shots, query)

    def build_sim(self, query: str, query_vec: FeatureVector, k: int) -> PromptSpec:
        """The k most similar shots from the all-pool, classes unconstrained."""
        if k < 1:
            raise ValueError("k must be at least 1")
        sims = self._similarities(query_vec)
        shots = [self._shot(i, sims) for i in self._all_pool(sims)[:k]]
        return self._spec("sim", shots, query)

    def _class_blocks(self, strategy: str, query: str, sims: np.ndarray,
                      classes: Sequence[int], probabilities: Sequence[float]) -> PromptSpec:
        shots = []
        for c, p in zip(classes, probabilities):
            for i in self._best_of_class(sims, int(c)):
                shots.append(self._shot(i, sims, class_probability=float(p)))
        return self._spec(strategy, shots, query)

    def build_max(self, query: str, query_vec: FeatureVector, proba_row, k: int) -> PromptSpec:
        """Blocks for the k classes the base model rates highest."""
        if k < 1:
            raise ValueError("k must be at least 1")
        p = np.asarray(proba_row, dtype=np.float64).ravel()
        if len(p) != len(self.label_space):
            raise ValueError("probability row does not match the label space")
        order = np.lexsort((np.arange(len(p)), -p))[: min(k, len(p))]
        sims = self._similarities(query_vec)
        return self._class_blocks("max", query, sims, order, p[order])

    def build_cicle(self, query: str, query_vec: FeatureVector,
                    prediction_set: PredictionSet) -> PromptOutcome:
        """Max-style blocks over the conformal set; singletons bypass."""
        if prediction_set.is_singleton:
            c = prediction_set.classes[0]
            return Bypass(
                label=self.label_space.labels[c],
                class_index=c,
                probability=prediction_set.probabilities[0],
            )
        sims = self._similarities(query_vec)
        return self._class_blocks(
            "cicle", query, sims, prediction_set.classes, prediction_set.probabilities
        )
