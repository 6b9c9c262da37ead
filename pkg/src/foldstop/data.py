"""Datasets, CSV ingestion, and stratified (repeated) k-fold splitting.

Numeric columns use NaN as the missing sentinel; categorical columns are
dictionary-encoded to dense codes with -1 reserved for missing (missing is a
level of its own and survives encoding downstream).  Splitting deals each
class's shuffled rows round-robin into k validation buckets, which guarantees
a per-class imbalance of at most one row between folds.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MISSING_CODE = -1  # reserved categorical code for an empty cell


class DataError(ValueError):
    """Raised for unreadable files, bad cells, or degenerate label columns."""


@dataclass(frozen=True)
class FeatureMatrix:
    """Rows of features, split into numeric and dictionary-encoded parts."""

    numeric: np.ndarray        # (n, d_num) float64, NaN marks missing
    categorical: np.ndarray    # (n, d_cat) int64 codes, MISSING_CODE marks missing
    numeric_names: tuple[str, ...]
    categorical_names: tuple[str, ...]

    @property
    def n_rows(self) -> int:
        return int(self.numeric.shape[0])

    def take(self, rows: Sequence[int] | np.ndarray) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=np.intp)
        return FeatureMatrix(
            numeric=self.numeric[rows],
            categorical=self.categorical[rows],
            numeric_names=self.numeric_names,
            categorical_names=self.categorical_names,
        )

    @classmethod
    def from_numeric(cls, X: np.ndarray, names: Iterable[str] | None = None) -> "FeatureMatrix":
        X = np.asarray(X, dtype=np.float64)
        names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(X.shape[1]))
        return cls(
            numeric=X,
            categorical=np.zeros((X.shape[0], 0), dtype=np.int64),
            numeric_names=names,
            categorical_names=(),
        )

    def schema(self) -> tuple[tuple[str, ...], tuple[str, ...]]:
        return (self.numeric_names, self.categorical_names)


@dataclass(frozen=True)
class Dataset:
    name: str
    features: FeatureMatrix
    labels: np.ndarray                    # (n,) int64 in [0, n_classes)
    classes: tuple[str, ...]              # label names, first-appearance order
    categories: tuple[tuple[str, ...], ...]  # per categorical column, level names

    def __post_init__(self):
        if self.labels.shape[0] != self.features.n_rows:
            raise DataError("labels and features disagree on row count")
        if self.n_classes < 2:
            raise DataError(f"dataset {self.name!r} has fewer than 2 classes")

    @property
    def n_rows(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, rows: Sequence[int] | np.ndarray) -> "Dataset":
        """Row subset; the global class table is kept so label ids stay stable."""
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(
            name=self.name,
            features=self.features.take(rows),
            labels=self.labels[rows],
            classes=self.classes,
            categories=self.categories,
        )


def load_csv(
    path: str | Path,
    target_column: str,
    categorical_columns: Sequence[str] = (),
    name: str | None = None,
) -> Dataset:
    """Load an RFC-4180 CSV with a header row into a Dataset.

    Undeclared non-target columns are parsed as floats (empty cell = missing);
    declared categorical columns are dictionary-encoded; target labels are
    factorized to dense integers in first-appearance order.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)

    if target_column not in header:
        raise DataError(f"{path}: target column {target_column!r} not found in header")
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r + 2} has {len(row)} cells, expected {len(header)}")
    missing_cats = [c for c in categorical_columns if c not in header]
    if missing_cats:
        raise DataError(f"{path}: categorical columns {missing_cats!r} not found in header")

    cat_set = set(categorical_columns)
    target_idx = header.index(target_column)
    num_cols = [(i, h) for i, h in enumerate(header) if i != target_idx and h not in cat_set]
    cat_cols = [(i, h) for i, h in enumerate(header) if i != target_idx and h in cat_set]

    n = len(rows)
    numeric = np.empty((n, len(num_cols)), dtype=np.float64)
    for j, (col, colname) in enumerate(num_cols):
        for r, row in enumerate(rows):
            cell = row[col].strip()
            if cell == "":
                numeric[r, j] = np.nan
                continue
            try:
                numeric[r, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {r + 2}, column {colname!r}: "
                    f"cannot parse {cell!r} as a number"
                ) from None

    categorical = np.empty((n, len(cat_cols)), dtype=np.int64)
    categories: list[tuple[str, ...]] = []
    for j, (col, _colname) in enumerate(cat_cols):
        levels: dict[str, int] = {}
        for r, row in enumerate(rows):
            cell = row[col].strip()
            if cell == "":
                categorical[r, j] = MISSING_CODE
                continue
            categorical[r, j] = levels.setdefault(cell, len(levels))
        categories.append(tuple(levels))

    label_map: dict[str, int] = {}
    labels = np.empty(n, dtype=np.int64)
    for r, row in enumerate(rows):
        labels[r] = label_map.setdefault(row[target_idx].strip(), len(label_map))
    if len(label_map) < 2:
        raise DataError(f"{path}: target {target_column!r} has fewer than 2 classes")

    return Dataset(
        name=name or path.stem,
        features=FeatureMatrix(
            numeric=numeric,
            categorical=categorical,
            numeric_names=tuple(h for _, h in num_cols),
            categorical_names=tuple(h for _, h in cat_cols),
        ),
        labels=labels,
        classes=tuple(label_map),
        categories=tuple(categories),
    )


# ---------------------------------------------------------------------------
# Minority-class resampling
# ---------------------------------------------------------------------------

def augment_minority_classes(
    dataset: Dataset, k: int, rng: np.random.Generator
) -> tuple[Dataset, tuple[int, ...]]:
    """Resample every class with fewer than k rows up to exactly k rows.

    Draws are without replacement while the class has enough distinct rows to
    cover the shortfall, with replacement otherwise.  Returns the augmented
    dataset plus the indices (into it) of the appended rows.
    """
    if k < 2:
        raise DataError("k must be at least 2")
    counts = dataset.class_counts()
    if (counts == 0).any():
        empty = [dataset.classes[i] for i in np.flatnonzero(counts == 0)]
        raise DataError(f"classes with zero rows cannot be resampled: {empty!r}")

    extra: list[np.ndarray] = []
    for cls in range(dataset.n_classes):
        need = k - counts[cls]
        if need <= 0:
            continue
        pool = np.flatnonzero(dataset.labels == cls)
        replace = need > pool.size
        extra.append(rng.choice(pool, size=need, replace=replace))
    if not extra:
        return dataset, ()

    added = np.concatenate(extra)
    rows = np.concatenate([np.arange(dataset.n_rows), added])
    augmented_rows = tuple(range(dataset.n_rows, dataset.n_rows + added.size))
    return dataset.subset(rows), augmented_rows


# ---------------------------------------------------------------------------
# Stratified (repeated) k-fold plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldAssignment:
    repeat: int
    fold: int
    train: np.ndarray
    validation: np.ndarray


@dataclass(frozen=True)
class FoldPlan:
    k: int
    repeats: int
    folds: tuple[FoldAssignment, ...]  # repeat-major order, length k * repeats
    augmented_rows: tuple[int, ...] = ()

    @property
    def n_total(self) -> int:
        return self.k * self.repeats


def stratified_kfold(
    dataset: Dataset,
    k: int,
    repeats: int = 1,
    rng: np.random.Generator | None = None,
    augmented_rows: tuple[int, ...] = (),
) -> FoldPlan:
    """Stratified k-fold plan; every class must already have at least k rows.

    Per repeat, each class's rows are shuffled and dealt round-robin into the
    k validation buckets; the train side is the complement.  Each repeat draws
    a fresh seed from ``rng`` so assignments differ between repeats.
    """
    if k < 2:
        raise DataError("k must be at least 2")
    if repeats < 1:
        raise DataError("repeats must be at least 1")
    counts = dataset.class_counts()
    short = np.flatnonzero(counts < k)
    if short.size:
        names = [dataset.classes[i] for i in short]
        raise DataError(
            f"classes {names!r} have fewer than {k} rows; "
            "call augment_minority_classes first"
        )
    rng = rng if rng is not None else np.random.default_rng()

    all_rows = np.arange(dataset.n_rows)
    folds: list[FoldAssignment] = []
    for rep in range(repeats):
        rep_rng = np.random.default_rng(int(rng.integers(0, 2**63 - 1)))
        buckets: list[list[int]] = [[] for _ in range(k)]
        for cls in range(dataset.n_classes):
            pool = np.flatnonzero(dataset.labels == cls)
            rep_rng.shuffle(pool)
            for pos, row in enumerate(pool):
                buckets[pos % k].append(int(row))
        for fold in range(k):
            val = np.sort(np.asarray(buckets[fold], dtype=np.intp))
            train = np.setdiff1d(all_rows, val, assume_unique=False)
            folds.append(FoldAssignment(repeat=rep, fold=fold, train=train, validation=val))

    return FoldPlan(k=k, repeats=repeats, folds=tuple(folds), augmented_rows=augmented_rows)


def make_fold_plan(
    dataset: Dataset, k: int, repeats: int, rng: np.random.Generator
) -> tuple[Dataset, FoldPlan]:
    """Augment minority classes to k rows, then build the stratified plan."""
    augmented, added = augment_minority_classes(dataset, k, rng)
    plan = stratified_kfold(augmented, k, repeats, rng, augmented_rows=added)
    return augmented, plan


# ---------------------------------------------------------------------------
# Outer train/test splits (dataset-level generalization folds)
# ---------------------------------------------------------------------------

def make_outer_splits(dataset: Dataset, n_folds: int, seed: int) -> list[dict]:
    """Stratified outer folds as JSON-ready {"train": [...], "test": [...]} dicts."""
    plan = stratified_kfold(dataset, n_folds, repeats=1, rng=np.random.default_rng(seed))
    return [
        {"train": fa.train.tolist(), "test": fa.validation.tolist()}
        for fa in plan.folds
    ]


def save_outer_splits(splits: list[dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps(splits), encoding="utf-8")


def load_outer_splits(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such outer-split file: {path}")
    splits = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(splits, list) or not splits:
        raise DataError(f"{path}: expected a non-empty list of splits")
    for i, split in enumerate(splits):
        if set(split) != {"train", "test"}:
            raise DataError(f"{path}: split {i} must have exactly 'train' and 'test' keys")
    return splits
