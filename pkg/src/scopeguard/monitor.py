"""Operation-stage monitor: buffer predictions, score batches, emit verdicts.

Decision rule on the primary measure's overall batch distance ``d``:

* ``d <= t_low``               -> InScope
* ``t_low < d <= t_high``      -> Borderline while extensions remain (the
  buffer grows by one more batch and is re-evaluated), else
  OutOfScope(extensions_exhausted)
* ``d > t_high``               -> OutOfScope(threshold_exceeded)

A predicted class missing from the training scope set is OutOfScope(unknown_class)
without further scoring.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from ._validation import check_count
from .calibrate import CalibrationArtifact
from .distances import BatchDistance, DistanceMeasure, SmallSubBatchWarning, batch_distance, parse_measures
from .ecdf import Dataset
from .exceptions import (
    AlreadyRegistered,
    EmptySample,
    InvalidConfig,
    MissingPredictions,
    NotCalibrated,
    SchemaMismatch,
    UnknownClass,
)

logger = logging.getLogger(__name__)


class VerdictKind(str, Enum):
    IN_SCOPE = "InScope"
    BORDERLINE = "Borderline"
    OUT_OF_SCOPE = "OutOfScope"


THRESHOLD_EXCEEDED = "threshold_exceeded"
UNKNOWN_CLASS = "unknown_class"
EXTENSIONS_EXHAUSTED = "extensions_exhausted"


@dataclass
class Verdict:
    kind: VerdictKind
    reason: Optional[str]
    batch_index: int
    size: int
    extensions_used: int
    class_counts: Dict[int, int]
    measure_values: Dict[DistanceMeasure, float]
    t_low: float
    t_high: float

    @property
    def is_final(self) -> bool:
        return self.kind is not VerdictKind.BORDERLINE

    def to_dict(self) -> dict:
        return {
            "batch_index": self.batch_index,
            "verdict": self.kind.value,
            "reason": self.reason,
            "measure_values": {m.value: v for m, v in self.measure_values.items()},
            "thresholds": {"t_low": self.t_low, "t_high": self.t_high},
            "class_counts": {str(c): n for c, n in sorted(self.class_counts.items())},
            "extensions_used": self.extensions_used,
            "size": self.size,
        }


@dataclass(frozen=True)
class MonitorConfig:
    batch_size: int
    max_extensions: int = 2
    measures: Optional[tuple] = None
    aggregation: Optional[str] = None
    primary_measure: Optional[str] = None

    def __post_init__(self):
        check_count(self.batch_size, "batch_size", minimum=2)
        check_count(self.max_extensions, "max_extensions", minimum=0)
        if self.aggregation not in (None, "mean", "max"):
            raise InvalidConfig("aggregation must be 'mean' or 'max'")

    @classmethod
    def from_artifact(cls, artifact: CalibrationArtifact, **overrides) -> "MonitorConfig":
        return cls(batch_size=overrides.pop("batch_size", artifact.batch_size), **overrides)


def _resolve(config: MonitorConfig, artifact: CalibrationArtifact):
    primary = DistanceMeasure.parse(config.primary_measure or artifact.primary_measure)
    measures = parse_measures(config.measures or artifact.measures)
    if primary not in measures:
        measures = (primary,) + measures
    missing = [m.value for m in measures if m not in artifact.thresholds]
    if missing:
        raise InvalidConfig(f"artifact has no thresholds for {missing}")
    return primary, measures, config.aggregation or artifact.aggregation


def evaluate_batch(
    batch: Dataset,
    artifact: CalibrationArtifact,
    config: MonitorConfig,
    extensions_used: int = 0,
    batch_index: int = 0,
) -> Tuple[Optional[BatchDistance], Verdict]:
    """Score ``batch`` and classify it into one of the three zones.

    A batch in which no predicted class has two rows cannot be scored; it is
    handled like a borderline result (more data is requested).
    """
    if not artifact.calibrated:
        raise NotCalibrated("artifact thresholds have not been selected; run the sweep first")
    if batch.predictions is None:
        raise MissingPredictions("batch needs predicted classes")
    primary, measures, aggregation = _resolve(config, artifact)
    t = artifact.thresholds[primary]
    classes, counts = np.unique(batch.predictions, return_counts=True)
    class_counts = {int(c): int(n) for c, n in zip(classes, counts)}

    def verdict(kind, reason, values):
        return Verdict(kind, reason, batch_index, batch.n_samples, extensions_used,
                       class_counts, values, t.t_low, t.t_high)

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SmallSubBatchWarning)
            dist = batch_distance(batch, artifact.tss, measures, aggregation)
    except UnknownClass:
        return None, verdict(VerdictKind.OUT_OF_SCOPE, UNKNOWN_CLASS, {})
    except EmptySample:
        dist, d = None, None
    else:
        d = dist.overall[primary]

    values = {} if dist is None else dict(dist.overall)
    if d is not None and d <= t.t_low:
        return dist, verdict(VerdictKind.IN_SCOPE, None, values)
    if d is not None and d > t.t_high:
        return dist, verdict(VerdictKind.OUT_OF_SCOPE, THRESHOLD_EXCEEDED, values)
    if extensions_used < config.max_extensions:
        return dist, verdict(VerdictKind.BORDERLINE, None, values)
    return dist, verdict(VerdictKind.OUT_OF_SCOPE, EXTENSIONS_EXHAUSTED, values)


class ScopeMonitor:
    """Stateful single-writer monitor; ``push_sample`` calls must be serialized.

    Parameters
    ----------
    artifact : CalibrationArtifact
        Must be calibrated.
    config : MonitorConfig, optional
        Defaults to the artifact's batch size with two extensions.
    """

    def __init__(self, artifact: CalibrationArtifact, config: Optional[MonitorConfig] = None):
        if not artifact.calibrated:
            raise NotCalibrated("artifact thresholds have not been selected; run the sweep first")
        self.artifact = artifact
        self.config = config or MonitorConfig.from_artifact(artifact)
        _resolve(self.config, artifact)
        self._n_features = artifact.tss.n_features
        self._handler: Optional[Callable[[Verdict], None]] = None
        self._features: List[np.ndarray] = []
        self._predicted: List[int] = []
        self.batch_index = 0
        self.extensions_used = 0

    @property
    def buffered(self) -> int:
        return len(self._predicted)

    @property
    def target_size(self) -> int:
        return self.config.batch_size * (1 + self.extensions_used)

    def on_out_of_scope(self, handler: Callable[[Verdict], None]) -> None:
        """Register the single callback run synchronously on every OutOfScope verdict."""
        if self._handler is not None:
            raise AlreadyRegistered("an out-of-scope handler is already registered")
        self._handler = handler

    def push_sample(self, features, predicted_label) -> Optional[Verdict]:
        x = np.asarray(features, dtype=float).reshape(-1)
        if x.shape[0] != self._n_features:
            raise SchemaMismatch(
                f"sample has {x.shape[0]} features, the training scope set has {self._n_features}"
            )
        if not np.all(np.isfinite(x)):
            raise SchemaMismatch("sample contains non-finite feature values")
        self._features.append(x)
        self._predicted.append(int(predicted_label))
        if self.buffered < self.target_size:
            return None
        return self._evaluate()

    def _evaluate(self) -> Verdict:
        batch = Dataset(
            np.vstack(self._features),
            predictions=np.asarray(self._predicted),
            feature_names=self.artifact.tss.feature_names,
        )
        _, v = evaluate_batch(batch, self.artifact, self.config, self.extensions_used, self.batch_index)
        if v.kind is VerdictKind.BORDERLINE:
            self.extensions_used += 1
            return v
        self._features.clear()
        self._predicted.clear()
        self.extensions_used = 0
        self.batch_index += 1
        if v.kind is VerdictKind.OUT_OF_SCOPE and self._handler is not None:
            try:
                self._handler(v)
            except Exception:
                logger.exception("out-of-scope handler failed on batch %d", v.batch_index)
        return v

    def run(self, stream: Dataset) -> Iterator[Verdict]:
        """Push every row of ``stream`` (which must carry predictions) in order."""
        if stream.predictions is None:
            raise MissingPredictions("stream needs a prediction column")
        for x, p in zip(stream.features, stream.predictions):
            v = self.push_sample(x, p)
            if v is not None:
                yield v

    def finish(self) -> int:
        """Drop a trailing partial batch; returns how many rows were discarded."""
        dropped = self.buffered
        if dropped:
            logger.warning("dropping %d buffered rows that do not fill a batch of %d",
                           dropped, self.target_size)
        self._features.clear()
        self._predicted.clear()
        self.extensions_used = 0
        return dropped
