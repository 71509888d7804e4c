"""ECDF-based two-sample distance statistics.

All four statistics are evaluated on the merged grid of distinct pooled values
``z_1 < ... < z_K`` with ``F``, ``G`` the ECDFs of the two samples, ``H`` the
pooled ECDF and ``w_i`` the pooled multiplicity of ``z_i``:

* KS   ``max_i |F(z_i) - G(z_i)|``
* CVM  ``n m / N**2 * sum_i w_i (F(z_i) - G(z_i))**2``
* AD   ``n m / N * sum_{H(z_i) < 1} w_i (F(z_i) - G(z_i))**2 / (H(z_i) (1 - H(z_i)))``
* WS   ``sum_{i < K} |F(z_i) - G(z_i)| (z_{i+1} - z_i)``

Absolute scale is specific to these definitions; thresholds are always
calibrated with the same code that evaluates them at runtime.
"""
from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count, check_sample
from .ecdf import DEFAULT_TSS_SIZE, Dataset, TrainingScopeSet, build_tss
from .exceptions import EmptySample, InvalidConfig, MissingPredictions, SchemaMismatch, UnknownClass

logger = logging.getLogger(__name__)

EXHAUSTIVE_MAX_POOLED = 16
DEFAULT_BOOTSTRAP = 100


class DistanceMeasure(str, Enum):
    KS = "ks"
    CVM = "cvm"
    AD = "ad"
    WS = "ws"

    @classmethod
    def parse(cls, value) -> "DistanceMeasure":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise InvalidConfig(
                f"unknown distance measure {value!r}; choose from {[m.value for m in cls]}"
            ) from None


ALL_MEASURES = (DistanceMeasure.CVM, DistanceMeasure.AD, DistanceMeasure.KS, DistanceMeasure.WS)


def parse_measures(measures) -> tuple:
    if measures is None:
        return ALL_MEASURES
    if isinstance(measures, (str, DistanceMeasure)):
        measures = [measures]
    parsed = []
    for m in measures:
        m = DistanceMeasure.parse(m)
        if m not in parsed:
            parsed.append(m)
    if not parsed:
        raise InvalidConfig("at least one distance measure is required")
    return tuple(parsed)


def _merged_grid(xs, ys):
    """ECDFs of two sorted samples on their pooled distinct values."""
    n, m = xs.shape[0], ys.shape[0]
    z, w = np.unique(np.concatenate([xs, ys]), return_counts=True)
    F = np.searchsorted(xs, z, side="right") / n
    G = np.searchsorted(ys, z, side="right") / m
    H = np.cumsum(w) / (n + m)
    return z, w, F, G, H


def _stat(measure, n, m, z, w, F, G, H):
    diff = F - G
    N = n + m
    if measure is DistanceMeasure.KS:
        return float(np.max(np.abs(diff)))
    if measure is DistanceMeasure.CVM:
        return float(n * m / N**2 * np.sum(w * diff**2))
    if measure is DistanceMeasure.AD:
        keep = H < 1.0
        h = H[keep]
        return float(n * m / N * np.sum(w[keep] * diff[keep] ** 2 / (h * (1.0 - h))))
    if measure is DistanceMeasure.WS:
        return float(np.sum(np.abs(diff[:-1]) * np.diff(z)))
    raise InvalidConfig(f"unsupported measure {measure!r}")


def two_sample_distances(x, y, measures=None, *, assume_sorted=False) -> Dict[DistanceMeasure, float]:
    """Compute several statistics from one merged-grid pass."""
    measures = parse_measures(measures)
    if assume_sorted:
        xs, ys = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if xs.size == 0 or ys.size == 0:
            raise EmptySample("both samples must be nonempty")
    else:
        xs = np.sort(check_sample(x, "x"))
        ys = np.sort(check_sample(y, "y"))
    grid = _merged_grid(xs, ys)
    n, m = xs.shape[0], ys.shape[0]
    return {meas: _stat(meas, n, m, *grid) for meas in measures}


def distance(x, y, measure) -> float:
    measure = DistanceMeasure.parse(measure)
    return two_sample_distances(x, y, [measure])[measure]


def ks_distance(x, y) -> float:
    """Largest vertical gap between the two ECDFs; lies in [0, 1]."""
    return distance(x, y, DistanceMeasure.KS)


def cvm_distance(x, y) -> float:
    return distance(x, y, DistanceMeasure.CVM)


def ad_distance(x, y) -> float:
    """Anderson-Darling statistic; pooled points with ``H = 1`` are skipped."""
    return distance(x, y, DistanceMeasure.AD)


def wasserstein_distance(x, y) -> float:
    """First Wasserstein distance, in the units of the samples."""
    return distance(x, y, DistanceMeasure.WS)


# ---------------------------------------------------------------------------
# permutation p-values


def bootstrap_pvalue(x, y, measure, B: int = DEFAULT_BOOTSTRAP, seed=None, *, exhaustive=False) -> float:
    """Permutation p-value of a two-sample distance.

    The pooled multiset is re-split into groups of the original sizes, without
    replacement, and ``p = (1 + #{d_b >= d_obs}) / (B + 1)``. With
    ``exhaustive=True`` every one of the ``C(n+m, n)`` splits is used once and
    ``B`` is ignored; that mode is limited to ``n + m <= 16``.

    Parameters
    ----------
    x, y : array_like
        The two samples.
    measure : DistanceMeasure or str
    B : int
        Number of random re-splits.
    seed : int, numpy.random.Generator or None
        Passed to :func:`numpy.random.default_rng`.
    exhaustive : bool
        Enumerate all splits instead of sampling them.

    Returns
    -------
    float
        p-value in ``(0, 1]``.
    """
    measure = DistanceMeasure.parse(measure)
    x = check_sample(x, "x")
    y = check_sample(y, "y")
    n = x.shape[0]
    pooled = np.concatenate([x, y])
    N = pooled.shape[0]
    d_obs = distance(x, y, measure)
    # ties at the observed value must count as "at least as extreme"
    tol = 1e-12 * max(1.0, abs(d_obs))

    if exhaustive:
        if N > EXHAUSTIVE_MAX_POOLED:
            raise InvalidConfig(
                f"exhaustive mode supports at most {EXHAUSTIVE_MAX_POOLED} pooled values, got {N}"
            )
        hits = 0
        total = 0
        everything = np.arange(N)
        for first in itertools.combinations(range(N), n):
            mask = np.zeros(N, dtype=bool)
            mask[list(first)] = True
            d_b = distance(pooled[mask], pooled[everything[~mask]], measure)
            hits += d_b >= d_obs - tol
            total += 1
        return (1 + hits) / (total + 1)

    if check_count(B, "B") < 1:
        raise InvalidConfig("B must be at least 1")
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(B):
        perm = rng.permutation(pooled)
        hits += distance(perm[:n], perm[n:], measure) >= d_obs - tol
    return (1 + hits) / (B + 1)


def exhaustive_split_count(n: int, m: int) -> int:
    return math.comb(n + m, n)


# ---------------------------------------------------------------------------
# reports


@dataclass
class DistanceReport:
    """Values (and optional p-values) of the distance statistics for one comparison."""

    values: Dict[DistanceMeasure, float]
    n: int
    m: int
    p_values: Dict[DistanceMeasure, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {}
        for meas in ALL_MEASURES:
            if meas in self.values:
                out[meas.value] = self.values[meas]
        for meas in ALL_MEASURES:
            if meas in self.p_values:
                out[f"p_{meas.value}"] = self.p_values[meas]
        out["n"] = self.n
        out["m"] = self.m
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DistanceReport":
        values = {m: float(data[m.value]) for m in ALL_MEASURES if m.value in data}
        pvals = {m: float(data[f"p_{m.value}"]) for m in ALL_MEASURES if f"p_{m.value}" in data}
        return cls(values=values, n=int(data["n"]), m=int(data["m"]), p_values=pvals)


def distance_report(x, y, measures=None, B: int = 0, seed=None) -> DistanceReport:
    """All requested statistics for ``x`` vs ``y``; p-values when ``B > 0``."""
    measures = parse_measures(measures)
    x = check_sample(x, "x")
    y = check_sample(y, "y")
    values = two_sample_distances(x, y, measures)
    p_values = {}
    if B:
        rng = np.random.default_rng(seed)
        for meas in measures:
            p_values[meas] = bootstrap_pvalue(x, y, meas, B=B, seed=rng)
    return DistanceReport(values=values, n=x.shape[0], m=y.shape[0], p_values=p_values)


class SmallSubBatchWarning(UserWarning):
    """A predicted class had fewer than two rows in a batch and was left out."""


@dataclass
class BatchDistance:
    """Distances of one batch against the training scope set.

    ``per_class[c][measure]`` aggregates over features; ``per_feature[c][measure]``
    keeps the raw per-feature values. ``overall`` is the class-count-weighted
    mean of the per-class values over the classes that were compared.
    """

    per_class: Dict[int, Dict[DistanceMeasure, float]]
    per_feature: Dict[int, Dict[DistanceMeasure, list]]
    overall: Dict[DistanceMeasure, float]
    class_counts: Dict[int, int]
    skipped_classes: list = field(default_factory=list)

    def report(self) -> DistanceReport:
        used = sum(self.class_counts[c] for c in self.per_class)
        return DistanceReport(values=dict(self.overall), n=used, m=0)


def _check_aggregation(aggregation):
    if aggregation not in ("mean", "max"):
        raise InvalidConfig(f"aggregation must be 'mean' or 'max', got {aggregation!r}")
    return aggregation


def batch_distance(
    batch: Dataset,
    tss: TrainingScopeSet,
    measures=None,
    aggregation: str = "mean",
) -> BatchDistance:
    """Compare a batch, grouped by predicted class, against the TSS cells.

    Raises
    ------
    UnknownClass
        A predicted class has no TSS cell. Callers treat this as an alarm.
    EmptySample
        The batch is empty or every class sub-batch has fewer than two rows.
    """
    measures = parse_measures(measures)
    _check_aggregation(aggregation)
    if batch.predictions is None:
        raise MissingPredictions("batch needs predicted classes")
    if batch.n_samples == 0:
        raise EmptySample("batch is empty")
    if batch.n_features != tss.n_features:
        raise SchemaMismatch(
            f"batch has {batch.n_features} features, training scope set has {tss.n_features}"
        )
    classes, counts = np.unique(batch.predictions, return_counts=True)
    class_counts = {int(c): int(k) for c, k in zip(classes, counts)}
    unknown = [c for c in class_counts if c not in tss]
    if unknown:
        raise UnknownClass(unknown)

    reduce = np.mean if aggregation == "mean" else np.max
    per_class, per_feature, skipped = {}, {}, []
    for c, count in class_counts.items():
        if count < 2:
            skipped.append(c)
            warnings.warn(
                f"class {c} has {count} row(s) in the batch; excluded from the distance",
                SmallSubBatchWarning,
                stacklevel=2,
            )
            continue
        block = batch.features[batch.predictions == c]
        cols = {meas: [] for meas in measures}
        for j in range(batch.n_features):
            vals = two_sample_distances(
                np.sort(block[:, j]), tss.cell(c, j).sorted_values, measures, assume_sorted=True
            )
            for meas in measures:
                cols[meas].append(vals[meas])
        per_feature[c] = cols
        per_class[c] = {meas: float(reduce(cols[meas])) for meas in measures}

    if not per_class:
        raise EmptySample("no predicted class has at least two rows in the batch")
    weights = np.array([class_counts[c] for c in per_class], dtype=float)
    overall = {
        meas: float(np.dot(weights, [per_class[c][meas] for c in per_class]) / weights.sum())
        for meas in measures
    }
    return BatchDistance(per_class, per_feature, overall, class_counts, skipped)


class TrainingScope(BaseEstimator):
    """Estimator wrapper around the training scope set.

    ``fit(X, y)`` draws the per-class sub-sample; ``distance(X, y_pred)``
    scores an operational batch against it.

    Parameters
    ----------
    per_class_size : int, default=100
    measures : sequence of str, optional
        Defaults to all four statistics.
    aggregation : {"mean", "max"}, default="mean"
        Reduction over features within a class.
    random_state : int or None
    """

    def __init__(self, per_class_size=DEFAULT_TSS_SIZE, measures=None, aggregation="mean", random_state=None):
        self.per_class_size = per_class_size
        self.measures = measures
        self.aggregation = aggregation
        self.random_state = random_state

    def fit(self, X, y, feature_names=None):
        data = Dataset(X, y, feature_names=feature_names)
        self.tss_ = build_tss(data, self.per_class_size, self.random_state)
        self.classes_ = np.array(self.tss_.classes)
        self.n_features_in_ = data.n_features
        return self

    def distance(self, X, y_pred) -> BatchDistance:
        check_is_fitted(self, "tss_")
        batch = Dataset(X, predictions=y_pred, feature_names=self.tss_.feature_names)
        return batch_distance(batch, self.tss_, self.measures, self.aggregation)

    def score_batches(self, batches: Iterable) -> np.ndarray:
        """Overall distances, one row per ``(X, y_pred)`` batch, one column per measure."""
        measures = parse_measures(self.measures)
        rows = []
        for X, y_pred in batches:
            overall = self.distance(X, y_pred).overall
            rows.append([overall[m] for m in measures])
        return np.asarray(rows, dtype=float).reshape(-1, len(measures))
