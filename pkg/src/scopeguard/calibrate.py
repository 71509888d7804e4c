"""Distance thresholds from development-time misclassification behavior.

``fit`` resamples batches from the misclassified part of a labelled test set
and records, per measure, the mean and standard deviation of their batch
distance to the training scope set. ``sweep`` then scores batches at two
accuracy levels against ``mu + k * sigma`` for a ladder of ``k`` values, and
``select_threshold`` picks the first ``k`` whose false-positive rate is
acceptable.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import ceil_count, check_count, check_probability
from .distances import (
    DistanceMeasure,
    SmallSubBatchWarning,
    batch_distance,
    parse_measures,
)
from .ecdf import DEFAULT_TSS_SIZE, Dataset, TrainingScopeSet, build_tss
from .exceptions import (
    EmptySample,
    InvalidConfig,
    InvalidValue,
    MissingPredictions,
    NoFeasibleThreshold,
    NoIncorrectSamples,
    UnknownClass,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
K_STEP = 0.1


@dataclass(frozen=True)
class CalibrationConfig:
    """Knobs for ``fit`` and ``sweep``.

    ``pos_accuracy``/``neg_accuracy`` are the batch accuracies that define a
    positive (should alarm) and a negative (acceptable) batch.
    """

    r_batches: int = 200
    neg_accuracy: float = 0.8
    pos_accuracy: float = 0.0
    k_max: float = 3.0
    fpr_target: float = 0.05
    k_gap: float = 1.0
    seed: Optional[int] = None
    per_class_size: int = DEFAULT_TSS_SIZE
    measures: Optional[tuple] = None
    aggregation: str = "mean"
    primary_measure: str = "cvm"

    def __post_init__(self):
        check_count(self.r_batches, "r_batches", minimum=1)
        check_probability(self.neg_accuracy, "neg_accuracy", closed=True)
        check_probability(self.pos_accuracy, "pos_accuracy", closed=True)
        if not self.pos_accuracy < self.neg_accuracy:
            raise InvalidConfig("pos_accuracy must be below neg_accuracy")
        if not (self.k_max >= 0 and math.isfinite(self.k_max)):
            raise InvalidConfig("k_max must be a finite non-negative number")
        check_probability(self.fpr_target, "fpr_target", closed=True)
        if not self.k_gap >= 0:
            raise InvalidConfig("k_gap must be non-negative")
        if self.aggregation not in ("mean", "max"):
            raise InvalidConfig("aggregation must be 'mean' or 'max'")
        object.__setattr__(self, "measures", parse_measures(self.measures))
        primary = DistanceMeasure.parse(self.primary_measure)
        if primary not in self.measures:
            raise InvalidConfig(f"primary measure {primary.value} is not among the measures")
        object.__setattr__(self, "primary_measure", primary)


@dataclass
class MeasureThreshold:
    mu: float
    sigma: float
    k_low: float = 0.0
    k_high: float = 0.0
    feasible: bool = True

    @property
    def t_low(self) -> float:
        return self.mu + self.k_low * self.sigma

    @property
    def t_high(self) -> float:
        return self.mu + self.k_high * self.sigma


@dataclass
class CalibrationArtifact:
    """Everything the runtime monitor needs, frozen at development time."""

    tss: TrainingScopeSet
    batch_size: int
    thresholds: Dict[DistanceMeasure, MeasureThreshold]
    aggregation: str = "mean"
    primary_measure: DistanceMeasure = DistanceMeasure.CVM
    calibrated: bool = False
    schema_version: int = SCHEMA_VERSION

    @property
    def measures(self) -> tuple:
        return tuple(self.thresholds)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "batch_size": self.batch_size,
            "aggregation": self.aggregation,
            "primary_measure": self.primary_measure.value,
            "calibrated": self.calibrated,
            "thresholds": {
                m.value: {
                    "mu": t.mu,
                    "sigma": t.sigma,
                    "k_low": t.k_low,
                    "k_high": t.k_high,
                    "feasible": t.feasible,
                }
                for m, t in self.thresholds.items()
            },
            "tss": self.tss.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationArtifact":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise InvalidValue(
                f"artifact schema_version {version!r} is not supported (expected {SCHEMA_VERSION})"
            )
        try:
            thresholds = {
                DistanceMeasure.parse(k): MeasureThreshold(
                    mu=float(v["mu"]),
                    sigma=float(v["sigma"]),
                    k_low=float(v["k_low"]),
                    k_high=float(v["k_high"]),
                    feasible=bool(v.get("feasible", True)),
                )
                for k, v in data["thresholds"].items()
            }
            return cls(
                tss=TrainingScopeSet.from_dict(data["tss"]),
                batch_size=int(data["batch_size"]),
                thresholds=thresholds,
                aggregation=data["aggregation"],
                primary_measure=DistanceMeasure.parse(data["primary_measure"]),
                calibrated=bool(data["calibrated"]),
                schema_version=version,
            )
        except (KeyError, TypeError) as exc:
            raise InvalidValue(f"malformed artifact: missing or invalid field {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "CalibrationArtifact":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InvalidValue(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data)


@dataclass
class SweepRow:
    k: float
    rates: Dict[DistanceMeasure, Dict[str, float]]  # measure -> {"tpr", "fpr"}

    def tpr(self, measure) -> float:
        return self.rates[DistanceMeasure.parse(measure)]["tpr"]

    def fpr(self, measure) -> float:
        return self.rates[DistanceMeasure.parse(measure)]["fpr"]


def _streams(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _pools(test: Dataset, tss: TrainingScopeSet):
    if test.predictions is None:
        raise MissingPredictions("the test set needs a prediction per row")
    if test.labels is None:
        raise InvalidValue("the test set needs labels")
    right = test.predictions == test.labels
    return np.flatnonzero(right), np.flatnonzero(~right)


def _score(test, rows, tss, measures, aggregation):
    """Overall distance per measure; an unknown predicted class scores +inf.

    A batch that cannot be scored at all scores NaN and is never flagged.
    """
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SmallSubBatchWarning)
            return batch_distance(test.subset(rows), tss, measures, aggregation).overall
    except UnknownClass:
        return {m: math.inf for m in measures}
    except EmptySample:
        return {m: math.nan for m in measures}


def fit(train: Dataset, test: Dataset, batch_size: int, config: CalibrationConfig = CalibrationConfig()) -> CalibrationArtifact:
    """Build the TSS and the per-measure ``mu``/``sigma`` of misclassified batches.

    ``config.r_batches`` batches of ``batch_size`` rows are drawn with
    replacement from the misclassified test rows. Rows predicted as a class
    the TSS does not know are left out of the pool. ``k_low``/``k_high`` stay
    at 0 and the artifact is marked uncalibrated until thresholds are selected.
    """
    check_count(batch_size, "batch_size", minimum=2)
    batch_rng = _streams(config.seed, 2)[0]
    tss = build_tss(train, config.per_class_size, config.seed)

    _, incorrect = _pools(test, tss)
    known = np.array([int(p) in tss for p in test.predictions[incorrect]], dtype=bool)
    if not known.all():
        logger.warning("%d misclassified rows predict a class outside the TSS; not used", (~known).sum())
        incorrect = incorrect[known]
    if incorrect.size == 0:
        raise NoIncorrectSamples(
            "the test set has no misclassified rows to calibrate against; "
            "hold out a class or use a harder test set"
        )
    if incorrect.size < batch_size:
        logger.info("only %d misclassified rows for batches of %d; resampling with replacement",
                    incorrect.size, batch_size)

    values = {m: [] for m in config.measures}
    for _ in range(config.r_batches):
        rows = batch_rng.choice(incorrect, size=batch_size, replace=True)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SmallSubBatchWarning)
                overall = batch_distance(test.subset(rows), tss, config.measures, config.aggregation).overall
        except EmptySample:
            continue
        for m in config.measures:
            values[m].append(overall[m])
    if not values[config.measures[0]]:
        raise NoIncorrectSamples("no calibration batch had a class with two or more rows")

    thresholds = {}
    for m in config.measures:
        v = np.asarray(values[m])
        thresholds[m] = MeasureThreshold(
            mu=float(v.mean()),
            sigma=float(v.std(ddof=1)) if v.size > 1 else 0.0,
        )
    return CalibrationArtifact(
        tss=tss,
        batch_size=batch_size,
        thresholds=thresholds,
        aggregation=config.aggregation,
        primary_measure=config.primary_measure,
    )


def k_ladder(k_max: float, step: float = K_STEP) -> List[float]:
    return [round(i * step, 10) for i in range(int(round(k_max / step)) + 1)]


def sweep_scores(artifact: CalibrationArtifact, test: Dataset, config: CalibrationConfig = CalibrationConfig()):
    """Distances of the positive and negative sweep batches.

    Returns two dicts ``measure -> array of r_batches distances``.
    """
    correct, incorrect = _pools(test, artifact.tss)
    bs = artifact.batch_size
    measures = artifact.measures
    layout = []
    for acc in (config.pos_accuracy, config.neg_accuracy):
        n_right = min(ceil_count(acc * bs), bs)
        layout.append((n_right, bs - n_right))
    for n_right, n_wrong in layout:
        if n_right and correct.size == 0:
            raise NoIncorrectSamples("the test set has no correctly classified rows")
        if n_wrong and incorrect.size == 0:
            raise NoIncorrectSamples("the test set has no misclassified rows")

    rng = _streams(config.seed, 2)[1]
    out = []
    for n_right, n_wrong in layout:
        scores = {m: np.empty(config.r_batches) for m in measures}
        for r in range(config.r_batches):
            rows = np.concatenate([
                rng.choice(correct, size=n_right, replace=True) if n_right else np.empty(0, int),
                rng.choice(incorrect, size=n_wrong, replace=True) if n_wrong else np.empty(0, int),
            ])
            overall = _score(test, rows, artifact.tss, measures, artifact.aggregation)
            for m in measures:
                scores[m][r] = overall[m]
        out.append(scores)
    return out[0], out[1]


def sweep(artifact: CalibrationArtifact, test: Dataset, config: CalibrationConfig = CalibrationConfig()) -> List[SweepRow]:
    """TPR/FPR of each measure for ``k = 0, 0.1, ..., k_max``.

    A batch is flagged when its overall distance exceeds ``mu + k * sigma``.
    Positive batches hold ``ceil(pos_accuracy * batch_size)`` correct rows and
    negative batches ``ceil(neg_accuracy * batch_size)``; the rest of each
    batch is misclassified rows.
    """
    pos, neg = sweep_scores(artifact, test, config)
    rows = []
    for k in k_ladder(config.k_max):
        rates = {}
        for m, t in artifact.thresholds.items():
            cut = t.mu + k * t.sigma
            rates[m] = {
                "tpr": float(np.mean(pos[m] > cut)),
                "fpr": float(np.mean(neg[m] > cut)),
            }
        rows.append(SweepRow(k, rates))
    return rows


def select_threshold(sweep_rows: List[SweepRow], fpr_target: float = 0.05, measure="cvm", k_gap: float = 1.0) -> Tuple[float, float]:
    """``(k_low, k_high)`` with ``k_low`` the smallest k meeting ``fpr_target``."""
    if not sweep_rows:
        raise InvalidConfig("empty sweep")
    measure = DistanceMeasure.parse(measure)
    for row in sorted(sweep_rows, key=lambda r: r.k):
        if row.fpr(measure) <= fpr_target:
            return row.k, row.k + k_gap
    best = min(row.fpr(measure) for row in sweep_rows)
    raise NoFeasibleThreshold(
        f"{measure.value}: no k reaches fpr <= {fpr_target}; best achievable fpr is {best:.4g}",
        best_fpr=best,
    )


def apply_thresholds(
    artifact: CalibrationArtifact,
    sweep_rows: List[SweepRow],
    fpr_target: float = 0.05,
    k_gap: float = 1.0,
) -> CalibrationArtifact:
    """Copy of ``artifact`` with ``k_low``/``k_high`` chosen per measure.

    The primary measure must be feasible. Other measures that never reach the
    target are pinned to the largest swept ``k`` and marked infeasible.
    """
    k_top = max(r.k for r in sweep_rows)
    thresholds = {}
    for m, t in artifact.thresholds.items():
        try:
            k_low, k_high = select_threshold(sweep_rows, fpr_target, m, k_gap)
            thresholds[m] = replace(t, k_low=k_low, k_high=k_high, feasible=True)
        except NoFeasibleThreshold:
            if m is artifact.primary_measure:
                raise
            logger.warning("%s never reaches fpr <= %s; pinned at k=%s", m.value, fpr_target, k_top)
            thresholds[m] = replace(t, k_low=k_top, k_high=k_top + k_gap, feasible=False)
    return replace(artifact, thresholds=thresholds, calibrated=True)


def write_sweep_csv(rows: List[SweepRow], path_or_file) -> None:
    """Long format, header ``k,measure,tpr,fpr``."""
    def dump(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "measure", "tpr", "fpr"])
        for row in rows:
            for m, r in row.rates.items():
                w.writerow([repr(row.k), m.value, repr(r["tpr"]), repr(r["fpr"])])

    if hasattr(path_or_file, "write"):
        dump(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            dump(fh)


class ScopeCalibrator(BaseEstimator):
    """fit + sweep + threshold selection as one estimator.

    ``fit(train, test)`` takes a labelled training :class:`Dataset` and a test
    :class:`Dataset` carrying predictions. After fitting, ``artifact_`` holds
    the calibrated artifact and ``sweep_`` the sweep rows.

    Parameters
    ----------
    batch_size : int
        Runtime batch size, usually from the power analysis.
    per_class_size : int, default=100
        Rows per class kept in the training scope set.
    r_batches : int, default=200
    neg_accuracy, pos_accuracy : float, default 0.8 and 0.0
    k_max : float, default=3.0
    fpr_target : float, default=0.05
    k_gap : float, default=1.0
        ``k_high - k_low``.
    measures : sequence of str, optional
    aggregation : {"mean", "max"}, default="mean"
    primary_measure : str, default="cvm"
    random_state : int or None
    """

    def __init__(
        self,
        batch_size=120,
        per_class_size=DEFAULT_TSS_SIZE,
        r_batches=200,
        neg_accuracy=0.8,
        pos_accuracy=0.0,
        k_max=3.0,
        fpr_target=0.05,
        k_gap=1.0,
        measures=None,
        aggregation="mean",
        primary_measure="cvm",
        random_state=None,
    ):
        self.batch_size = batch_size
        self.per_class_size = per_class_size
        self.r_batches = r_batches
        self.neg_accuracy = neg_accuracy
        self.pos_accuracy = pos_accuracy
        self.k_max = k_max
        self.fpr_target = fpr_target
        self.k_gap = k_gap
        self.measures = measures
        self.aggregation = aggregation
        self.primary_measure = primary_measure
        self.random_state = random_state

    def _config(self) -> CalibrationConfig:
        return CalibrationConfig(
            r_batches=self.r_batches,
            neg_accuracy=self.neg_accuracy,
            pos_accuracy=self.pos_accuracy,
            k_max=self.k_max,
            fpr_target=self.fpr_target,
            k_gap=self.k_gap,
            seed=self.random_state,
            per_class_size=self.per_class_size,
            measures=self.measures,
            aggregation=self.aggregation,
            primary_measure=self.primary_measure,
        )

    def fit(self, train: Dataset, test: Dataset):
        config = self._config()
        raw = fit(train, test, self.batch_size, config)
        self.sweep_ = sweep(raw, test, config)
        self.artifact_ = apply_thresholds(raw, self.sweep_, config.fpr_target, config.k_gap)
        return self

    def thresholds(self) -> Dict[str, Tuple[float, float]]:
        """``measure -> (t_low, t_high)`` of the fitted artifact."""
        check_is_fitted(self, "artifact_")
        return {m.value: (t.t_low, t.t_high) for m, t in self.artifact_.thresholds.items()}
