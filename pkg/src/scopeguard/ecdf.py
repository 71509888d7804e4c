"""Datasets, empirical CDFs and the training scope set.

The training scope set (TSS) is a per-class, per-feature collection of sorted
samples drawn uniformly from the training data. Runtime batches are compared
against it cell by cell.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._validation import check_count, check_features, check_labels, check_sample
from .exceptions import EmptyClass, EmptySample, InvalidValue, SchemaMismatch

DEFAULT_TSS_SIZE = 100


def _frozen(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rows of numeric feature vectors with class labels and optional predictions.

    ``labels`` may be ``None`` for unlabeled operational data, in which case
    ``predictions`` is what the monitor groups by. ``scope`` carries
    ground-truth ``"in"``/``"out"`` flags for synthetic streams.
    """

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    predictions: Optional[np.ndarray] = None
    feature_names: Optional[tuple] = None
    scope: Optional[np.ndarray] = None

    def __post_init__(self):
        X = check_features(self.features)
        object.__setattr__(self, "features", _frozen(X))
        n = X.shape[0]
        if self.labels is not None:
            object.__setattr__(self, "labels", _frozen(check_labels(self.labels, n)))
        if self.predictions is not None:
            object.__setattr__(
                self, "predictions", _frozen(check_labels(self.predictions, n, "predictions"))
            )
        if self.feature_names is None:
            names = tuple(f"f{j}" for j in range(X.shape[1]))
        else:
            names = tuple(str(s) for s in self.feature_names)
            if len(names) != X.shape[1]:
                raise SchemaMismatch(
                    f"{len(names)} feature names given for {X.shape[1]} feature columns"
                )
        object.__setattr__(self, "feature_names", names)
        if self.scope is not None:
            scope = np.asarray(self.scope, dtype=object)
            if scope.shape != (n,):
                raise SchemaMismatch("scope flags must have one entry per row")
            if not set(scope.tolist()) <= {"in", "out"}:
                raise InvalidValue("scope flags must be 'in' or 'out'")
            object.__setattr__(self, "scope", _frozen(scope))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.n_samples

    def classes(self, by="labels") -> np.ndarray:
        return np.unique(self._column(by))

    def _column(self, by):
        col = getattr(self, by)
        if col is None:
            raise InvalidValue(f"dataset has no {by}")
        return col

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        pick = lambda a: None if a is None else a[index]
        return Dataset(
            self.features[index],
            pick(self.labels),
            pick(self.predictions),
            self.feature_names,
            pick(self.scope),
        )

    def with_predictions(self, predictions) -> "Dataset":
        return Dataset(self.features, self.labels, predictions, self.feature_names, self.scope)

    def equals(self, other: "Dataset") -> bool:
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and bool(np.all(a == b))

        return (
            self.feature_names == other.feature_names
            and same(self.features, other.features)
            and same(self.labels, other.labels)
            and same(self.predictions, other.predictions)
            and same(self.scope, other.scope)
        )


@dataclass(frozen=True, eq=False)
class Ecdf:
    """Right-continuous empirical CDF backed by a sorted sample."""

    sorted_values: np.ndarray

    @property
    def n(self) -> int:
        return self.sorted_values.shape[0]

    def __call__(self, x):
        return ecdf_eval(self, x)

    def __eq__(self, other):
        if not isinstance(other, Ecdf):
            return NotImplemented
        return np.array_equal(self.sorted_values, other.sorted_values)

    __hash__ = None


def build_ecdf(values) -> Ecdf:
    """Sort a copy of ``values`` and wrap it as an :class:`Ecdf`.

    Raises
    ------
    EmptySample
        If ``values`` is empty.
    InvalidValue
        If any value is NaN or infinite.
    """
    arr = check_sample(values)
    return Ecdf(_frozen(np.sort(arr, kind="stable")))


def ecdf_eval(ecdf: Ecdf, x):
    """Fraction of the sample that is ``<= x``; vectorized over ``x``."""
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)):
        raise InvalidValue("ECDF evaluation point must be finite")
    counts = np.searchsorted(ecdf.sorted_values, xa, side="right")
    out = counts / ecdf.n
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class TrainingScopeSet:
    """Per-class, per-feature ECDF cells drawn from the training data."""

    cells: dict  # class id -> tuple of Ecdf, one per feature
    tss_size_per_class: int
    seed: Optional[int]
    feature_names: tuple = field(default=())

    @property
    def classes(self) -> list:
        return sorted(self.cells)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def cell(self, cls, feature) -> Ecdf:
        return self.cells[int(cls)][feature]

    def __contains__(self, cls):
        return int(cls) in self.cells

    def __eq__(self, other):
        if not isinstance(other, TrainingScopeSet):
            return NotImplemented
        return (
            self.tss_size_per_class == other.tss_size_per_class
            and self.seed == other.seed
            and self.feature_names == other.feature_names
            and self.classes == other.classes
            and all(self.cells[c] == other.cells[c] for c in self.classes)
        )

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "tss_size_per_class": self.tss_size_per_class,
            "seed": self.seed,
            "feature_names": list(self.feature_names),
            "cells": {
                str(c): [e.sorted_values.tolist() for e in self.cells[c]] for c in self.classes
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingScopeSet":
        cells = {
            int(c): tuple(build_ecdf(v) for v in cols) for c, cols in data["cells"].items()
        }
        return cls(
            cells=cells,
            tss_size_per_class=int(data["tss_size_per_class"]),
            seed=data.get("seed"),
            feature_names=tuple(data["feature_names"]),
        )


def build_tss(
    train: Dataset,
    per_class_size: int = DEFAULT_TSS_SIZE,
    seed=None,
    classes: Optional[Sequence[int]] = None,
) -> TrainingScopeSet:
    """Sub-sample each training class uniformly without replacement.

    Classes are visited in ascending order and a single generator seeded with
    ``seed`` draws row indices for each, so the result depends only on the
    dataset contents, their row order and the seed. Passing ``classes``
    demands a cell for every listed class, including ones with no rows.
    """
    check_count(per_class_size, "per_class_size", minimum=2)
    if train.labels is None:
        raise InvalidValue("training data needs labels")
    if train.n_samples == 0:
        raise EmptySample("training data has no rows")
    wanted = train.classes() if classes is None else np.unique(np.asarray(classes, dtype=int))

    rng = np.random.default_rng(seed)
    cells = {}
    for c in wanted:
        rows = np.flatnonzero(train.labels == c)
        if rows.size == 0:
            raise EmptyClass(f"class {int(c)} has no training rows")
        if rows.size > per_class_size:
            rows = np.sort(rng.choice(rows, size=per_class_size, replace=False))
        block = train.features[rows]
        cells[int(c)] = tuple(build_ecdf(block[:, j]) for j in range(train.n_features))
    return TrainingScopeSet(
        cells=cells,
        tss_size_per_class=per_class_size,
        seed=seed if seed is None else int(seed),
        feature_names=train.feature_names,
    )

