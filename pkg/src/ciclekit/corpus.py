"""Incident corpus handling: records, label spaces, CV splits, support tiers.

The corpus is a flat table of short incident texts (one title per record)
with four parallel classification targets of very different granularity.
Everything downstream consumes records through :class:`LabeledDataset`, so
loading, validation and splitting live here.
"""

from __future__ import annotations

import ast
import csv
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

TASKS = ("hazard", "hazard-category", "product", "product-category")

# record attribute backing each task name
TASK_FIELDS = {
    "hazard": "hazard",
    "hazard-category": "hazard_category",
    "product": "product",
    "product-category": "product_category",
}

REQUIRED_COLUMNS = ("title", "hazard", "hazard-category", "product", "product-category")
OPTIONAL_COLUMNS = ("year", "month", "day", "language", "country", "hazard-title", "product-title")


class DatasetSchemaError(ValueError):
    """The CSV header is missing a required column."""


class DatasetRowError(ValueError):
    """A CSV row could not be turned into a valid record."""


def _check_task(task: str) -> str:
    if task not in TASK_FIELDS:
        raise ValueError(f"unknown task {task!r}, expected one of {TASKS}")
    return task


Span = tuple[int, int]


def _validate_spans(spans: Sequence[Span] | None, title: str, what: str) -> tuple[Span, ...] | None:
    if spans is None:
        return None
    out = []
    for pair in spans:
        start, end = int(pair[0]), int(pair[1])
        if not (0 <= start < end <= len(title)):
            raise ValueError(f"{what} span ({start}, {end}) out of bounds for title of length {len(title)}")
        out.append((start, end))
    return tuple(out)


@dataclass(frozen=True)
class IncidentRecord:
    """One incident: a short title plus its four gold labels.

    Span annotations, when present, are half-open character intervals into
    ``title`` marking the hazard or product mention.
    """

    title: str
    hazard: str
    hazard_category: str
    product: str
    product_category: str
    year: int | None = None
    month: int | None = None
    day: int | None = None
    language: str | None = None
    country: str | None = None
    hazard_spans: tuple[Span, ...] | None = None
    product_spans: tuple[Span, ...] | None = None

    def __post_init__(self) -> None:
        if not self.title:
            raise ValueError("record title must be non-empty")
        for task, attr in TASK_FIELDS.items():
            if not getattr(self, attr):
                raise ValueError(f"record is missing a label for task {task!r}")
        object.__setattr__(self, "hazard_spans", _validate_spans(self.hazard_spans, self.title, "hazard"))
        object.__setattr__(self, "product_spans", _validate_spans(self.product_spans, self.title, "product"))

    def label(self, task: str) -> str:
        return getattr(self, TASK_FIELDS[_check_task(task)])


@dataclass(frozen=True)
class LabelSpace:
    """Ordered distinct class labels for one task.

    Labels are kept in lexicographic order, which fixes the label-to-index
    bijection for a given dataset once and for all.
    """

    labels: tuple[str, ...]
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be distinct")
        if list(self.labels) != sorted(self.labels):
            raise ValueError("labels must be lexicographically sorted")
        if len(self.counts) != len(self.labels):
            raise ValueError("counts must align with labels")

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "LabelSpace":
        tally: dict[str, int] = {}
        for lab in labels:
            tally[lab] = tally.get(lab, 0) + 1
        ordered = tuple(sorted(tally))
        return cls(labels=ordered, counts=tuple(tally[lab] for lab in ordered))

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except AttributeError:
            object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(self.labels)})
            return self._index[label]

    def __contains__(self, label: str) -> bool:
        return label in self.labels


class LabeledDataset:
    """Immutable sequence of records with per-task label spaces."""

    def __init__(self, records: Iterable[IncidentRecord]):
        self.records: tuple[IncidentRecord, ...] = tuple(records)
        self._spaces: dict[str, LabelSpace] = {}

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> IncidentRecord:
        return self.records[i]

    def __iter__(self) -> Iterator[IncidentRecord]:
        return iter(self.records)

    def titles(self) -> list[str]:
        return [r.title for r in self.records]

    def label_space(self, task: str) -> LabelSpace:
        _check_task(task)
        if task not in self._spaces:
            self._spaces[task] = LabelSpace.from_labels(r.label(task) for r in self.records)
        return self._spaces[task]

    def labels(self, task: str) -> list[str]:
        _check_task(task)
        return [r.label(task) for r in self.records]

    def y(self, task: str, space: LabelSpace | None = None) -> np.ndarray:
        """Class indices for ``task`` under ``space`` (default: this dataset's)."""
        space = space or self.label_space(task)
        return np.array([space.index(r.label(task)) for r in self.records], dtype=np.int64)

    def subset(self, indices: Sequence[int]) -> "LabeledDataset":
        return LabeledDataset(self.records[i] for i in indices)


def _parse_spans(raw: str) -> tuple[Span, ...] | None:
    raw = raw.strip()
    if not raw:
        return None
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        # annotation exports sometimes use Python repr with tuples
        value = ast.literal_eval(raw)
    spans = []
    for pair in value:
        if len(pair) != 2:
            raise ValueError(f"span {pair!r} is not a pair")
        spans.append((int(pair[0]), int(pair[1])))
    return tuple(spans)


def _parse_int(raw: str | None) -> int | None:
    if raw is None or not raw.strip():
        return None
    return int(raw)


def load_csv(path: str) -> LabeledDataset:
    """Load a dataset from CSV.

    The header must contain ``title`` and the four label columns; date,
    language, country and span columns are optional. Raises
    :class:`DatasetSchemaError` for a bad header and :class:`DatasetRowError`
    (carrying the 1-based data row number) for a bad row.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise DatasetSchemaError(f"missing required column {col!r}")
        records = []
        for row_no, row in enumerate(reader, start=1):
            try:
                records.append(
                    IncidentRecord(
                        title=(row.get("title") or ""),
                        hazard=(row.get("hazard") or ""),
                        hazard_category=(row.get("hazard-category") or ""),
                        product=(row.get("product") or ""),
                        product_category=(row.get("product-category") or ""),
                        year=_parse_int(row.get("year")),
                        month=_parse_int(row.get("month")),
                        day=_parse_int(row.get("day")),
                        language=(row.get("language") or None),
                        country=(row.get("country") or None),
                        hazard_spans=_parse_spans(row.get("hazard-title") or ""),
                        product_spans=_parse_spans(row.get("product-title") or ""),
                    )
                )
            except (ValueError, SyntaxError) as exc:
                raise DatasetRowError(f"row {row_no}: {exc}") from exc
    return LabeledDataset(records)


def save_csv(dataset: LabeledDataset, path: str) -> None:
    """Write a dataset back out; ``load_csv(save_csv(ds))`` preserves records."""
    columns = list(REQUIRED_COLUMNS) + list(OPTIONAL_COLUMNS)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for r in dataset:
            writer.writerow(
                [
                    r.title,
                    r.hazard,
                    r.hazard_category,
                    r.product,
                    r.product_category,
                    "" if r.year is None else r.year,
                    "" if r.month is None else r.month,
                    "" if r.day is None else r.day,
                    r.language or "",
                    r.country or "",
                    "" if r.hazard_spans is None else json.dumps([list(s) for s in r.hazard_spans]),
                    "" if r.product_spans is None else json.dumps([list(s) for s in r.product_spans]),
                ]
            )


@dataclass(frozen=True)
class Fold:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self) -> None:
        for part in (self.train, self.val, self.test):
            if len(np.unique(part)) != len(part):
                raise ValueError("fold indices must be unique")
        combined = np.concatenate([self.train, self.val, self.test])
        if len(np.unique(combined)) != len(combined):
            raise ValueError("train/val/test must be disjoint")


@dataclass(frozen=True)
class SplitPlan:
    """A k-fold cross-validation plan over record indices.

    Within each fold the test block is one of k disjoint chunks covering the
    whole dataset, and the validation block is carved out of the remaining
    indices. The plan is a pure function of (dataset labels, parameters), so
    persisting it as JSON makes every later stage reproducible.
    """

    folds: tuple[Fold, ...]
    seed: int
    n_records: int
    val_fraction: float
    stratify_task: str | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "n_records": self.n_records,
                "val_fraction": self.val_fraction,
                "stratify_task": self.stratify_task,
                "folds": [
                    {
                        "train": [int(i) for i in f.train],
                        "val": [int(i) for i in f.val],
                        "test": [int(i) for i in f.test],
                    }
                    for f in self.folds
                ],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        obj = json.loads(text)
        folds = tuple(
            Fold(
                train=np.array(f["train"], dtype=np.int64),
                val=np.array(f["val"], dtype=np.int64),
                test=np.array(f["test"], dtype=np.int64),
            )
            for f in obj["folds"]
        )
        return cls(
            folds=folds,
            seed=int(obj["seed"]),
            n_records=int(obj["n_records"]),
            val_fraction=float(obj["val_fraction"]),
            stratify_task=obj.get("stratify_task"),
        )


def _round_robin_test_folds(y: np.ndarray, k: int, rng: np.random.Generator) -> list[list[int]]:
    """Assign each class's shuffled members to folds in rotation.

    A single rotation counter persists across classes so fold sizes stay
    balanced overall while per-class counts differ by at most one.
    """
    folds: list[list[int]] = [[] for _ in range(k)]
    cursor = 0
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        members = members[rng.permutation(len(members))]
        for idx in members:
            folds[cursor % k].append(int(idx))
            cursor += 1
    return folds


def _val_size(n_rest: int, val_fraction: float) -> int:
    size = int(np.floor(val_fraction * n_rest))
    if size == 0 and n_rest >= 2:
        size = 1
    return size


def make_cv_splits(
    dataset: LabeledDataset,
    k: int = 5,
    val_fraction: float = 0.1,
    stratify_task: str | None = None,
    seed: int = 42,
) -> SplitPlan:
    """Build a k-fold plan with a per-fold validation holdout.

    With ``stratify_task`` set, both the test chunks and the validation
    holdout are stratified on that task's labels; otherwise chunks come from
    one global shuffle. ``val_fraction`` of each fold's non-test indices
    (rounded down, at least 1 when two or more are available) become the
    validation block.
    """
    n = len(dataset)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"cannot make {k} folds from {n} records")
    if not (0.0 <= val_fraction < 1.0):
        raise ValueError("val_fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)

    if stratify_task is None:
        order = rng.permutation(n)
        test_blocks = [list(map(int, chunk)) for chunk in np.array_split(order, k)]
        y = None
    else:
        y = dataset.y(_check_task(stratify_task))
        test_blocks = _round_robin_test_folds(y, k, rng)

    folds = []
    for test_idx in test_blocks:
        test = np.array(sorted(test_idx), dtype=np.int64)
        rest = np.setdiff1d(np.arange(n, dtype=np.int64), test)
        n_val = _val_size(len(rest), val_fraction)
        if stratify_task is None or n_val == 0:
            rest_shuffled = rest[rng.permutation(len(rest))]
            val = np.sort(rest_shuffled[:n_val])
        else:
            val = _stratified_val(rest, y, n_val, rng)
        train = np.setdiff1d(rest, val)
        folds.append(Fold(train=train, val=val, test=test))
    return SplitPlan(
        folds=tuple(folds),
        seed=seed,
        n_records=n,
        val_fraction=val_fraction,
        stratify_task=stratify_task,
    )


def _stratified_val(rest: np.ndarray, y: np.ndarray, n_val: int, rng: np.random.Generator) -> np.ndarray:
    """Pick a validation block from ``rest`` matching its class proportions.

    Each class contributes floor(fraction * count) members, then classes with
    the largest fractional remainders (ties by class index) top the block up
    to exactly ``n_val``.
    """
    y_rest = y[rest]
    classes = np.unique(y_rest)
    frac = n_val / len(rest)
    chosen: list[int] = []
    leftovers: list[tuple[float, int, np.ndarray]] = []
    for cls in classes:
        members = rest[y_rest == cls]
        members = members[rng.permutation(len(members))]
        want = frac * len(members)
        base = int(np.floor(want))
        base = min(base, len(members))
        chosen.extend(int(i) for i in members[:base])
        if base < len(members):
            leftovers.append((want - base, int(cls), members[base:]))
    short = n_val - len(chosen)
    leftovers.sort(key=lambda item: (-item[0], item[1]))
    for _, _, extra in leftovers:
        if short <= 0:
            break
        chosen.append(int(extra[0]))
        short -= 1
    return np.array(sorted(chosen), dtype=np.int64)


@dataclass(frozen=True)
class SupportTiers:
    """Label-space thirds by cumulative support.

    ``high`` is the smallest prefix of labels (sorted by descending support,
    ties lexicographic) whose cumulative support reaches a third of the
    records; ``low`` is the mirrored smallest suffix; ``medium`` is the rest.
    """

    high: tuple[str, ...]
    medium: tuple[str, ...]
    low: tuple[str, ...]
    high_support: int
    medium_support: int
    low_support: int


def support_tiers(dataset: LabeledDataset, task: str) -> SupportTiers:
    space = dataset.label_space(_check_task(task))
    order = sorted(range(len(space)), key=lambda i: (-space.counts[i], space.labels[i]))
    counts = [space.counts[i] for i in order]
    total = sum(counts)
    threshold = total / 3.0

    cum = 0
    hi_end = 0
    while cum < threshold:
        cum += counts[hi_end]
        hi_end += 1
    high_support = cum

    cum = 0
    lo_start = len(order)
    while cum < threshold:
        lo_start -= 1
        cum += counts[lo_start]
    low_support = cum

    if lo_start < hi_end:
        raise ValueError(f"support tiers overlap for task {task!r}; label space too small")

    labels = [space.labels[i] for i in order]
    return SupportTiers(
        high=tuple(labels[:hi_end]),
        medium=tuple(labels[hi_end:lo_start]),
        low=tuple(labels[lo_start:]),
        high_support=high_support,
        medium_support=total - high_support - low_support,
        low_support=low_support,
    )


def filter_well_supported(
    dataset: LabeledDataset,
    plan: SplitPlan,
    task: str,
    min_train: int = 4,
    min_test: int = 1,
) -> list[frozenset[int]]:
    """Per-fold sets of class indices with enough support to score fairly.

    A class is kept for a fold when it has at least ``min_train`` records in
    the fold's train block and at least ``min_test`` in its test block.
    """
    y = dataset.y(_check_task(task))
    out = []
    for fold in plan.folds:
        train_counts = np.bincount(y[fold.train], minlength=len(dataset.label_space(task)))
        test_counts = np.bincount(y[fold.test], minlength=len(dataset.label_space(task)))
        keep = frozenset(
            int(c)
            for c in range(len(dataset.label_space(task)))
            if train_counts[c] >= min_train and test_counts[c] >= min_test
        )
        out.append(keep)
    return out
