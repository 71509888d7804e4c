"""Gaussian-mixture scenarios with controllable mean-shift drift.

Stand-in for simulator data at desk scale: each class is an axis-aligned
Gaussian, and stream segments shift every class mean by a per-feature
multiple of that feature's standard deviation. Stream rows carry a
ground-truth ``scope`` flag.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ._validation import check_count
from .ecdf import Dataset
from .exceptions import InvalidConfig


@dataclass(frozen=True)
class StreamSegment:
    length: int
    drift: Tuple[float, ...] = ()  # per-feature shift in units of sigma; empty means none
    scope: str = "in"

    def shift(self, n_features):
        if not self.drift:
            return np.zeros(n_features)
        drift = np.asarray(self.drift, dtype=float)
        if drift.size == 1:
            return np.full(n_features, float(drift[0]))
        if drift.shape != (n_features,):
            raise InvalidConfig(f"segment drift needs 1 or {n_features} entries, got {drift.size}")
        return drift


@dataclass(frozen=True)
class ScenarioSpec:
    n_classes: int
    n_features: int
    means: Tuple[Tuple[float, ...], ...]
    stds: Tuple[float, ...]
    n_train: int
    n_test: int
    segments: Tuple[StreamSegment, ...] = ()
    seed: Optional[int] = 0

    def validate(self):
        check_count(self.n_classes, "n_classes", minimum=1)
        check_count(self.n_features, "n_features", minimum=1)
        check_count(self.n_train, "n_train", minimum=1)
        check_count(self.n_test, "n_test", minimum=0)
        means = np.asarray(self.means, dtype=float)
        if means.shape != (self.n_classes, self.n_features):
            raise InvalidConfig(
                f"means must be {self.n_classes}x{self.n_features}, got shape {means.shape}"
            )
        stds = np.asarray(self.stds, dtype=float)
        if stds.shape != (self.n_features,) or not np.all(stds > 0):
            raise InvalidConfig("stds must hold one positive value per feature")
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(stds))):
            raise InvalidConfig("means and stds must be finite")
        for seg in self.segments:
            check_count(seg.length, "segment length", minimum=1)
            if seg.scope not in ("in", "out"):
                raise InvalidConfig(f"segment scope must be 'in' or 'out', got {seg.scope!r}")
            seg.shift(self.n_features)
        return self

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "means": [list(r) for r in self.means],
            "stds": list(self.stds),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "segments": [
                {"length": s.length, "drift": list(s.drift), "scope": s.scope} for s in self.segments
            ],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        try:
            segments = tuple(
                StreamSegment(
                    length=s["length"],
                    drift=tuple(float(v) for v in np.atleast_1d(s.get("drift", ()))),
                    scope=s.get("scope", "in"),
                )
                for s in data.get("segments", ())
            )
            spec = cls(
                n_classes=data["n_classes"],
                n_features=data["n_features"],
                means=tuple(tuple(float(v) for v in row) for row in data["means"]),
                stds=tuple(float(v) for v in data["stds"]),
                n_train=data["n_train"],
                n_test=data["n_test"],
                segments=segments,
                seed=data.get("seed", 0),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfig(f"invalid scenario spec: {exc}") from exc
        return spec.validate()


def _draw(rng, spec, labels, shift):
    means = np.asarray(spec.means, dtype=float)
    stds = np.asarray(spec.stds, dtype=float)
    noise = rng.standard_normal((labels.shape[0], spec.n_features))
    return means[labels] + (shift + noise) * stds


def _names(n):
    return tuple(f"x{j}" for j in range(n))


def generate(spec: ScenarioSpec) -> Tuple[Dataset, Dataset, Dataset]:
    """Draw ``(train, test, stream)``; deterministic for a fixed ``spec.seed``.

    Train and test hold ``n_train``/``n_test`` rows per class in shuffled
    order. Stream rows pick their class uniformly at random.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    names = _names(spec.n_features)
    no_shift = np.zeros(spec.n_features)

    def labelled(per_class):
        labels = rng.permutation(np.repeat(np.arange(spec.n_classes), per_class))
        return Dataset(_draw(rng, spec, labels, no_shift), labels, feature_names=names)

    train = labelled(spec.n_train)
    test = labelled(spec.n_test)

    blocks, labels, scope = [], [], []
    for seg in spec.segments:
        y = rng.integers(0, spec.n_classes, size=seg.length)
        blocks.append(_draw(rng, spec, y, seg.shift(spec.n_features)))
        labels.append(y)
        scope.extend([seg.scope] * seg.length)
    if blocks:
        stream = Dataset(np.vstack(blocks), np.concatenate(labels), feature_names=names,
                         scope=np.array(scope, dtype=object))
    else:
        stream = Dataset(np.empty((0, spec.n_features)), np.empty(0, dtype=np.int64),
                         feature_names=names, scope=np.empty(0, dtype=object))
    return train, test, stream


SEPARATION = 3.0
DRIFT = 2.0


def separable_scenario(
    seed: Optional[int] = 0,
    batch_size: int = 120,
    batches_before: int = 10,
    drifted_batches: int = 5,
    batches_after: int = 5,
    n_train: int = 1000,
    n_test: int = 3000,
) -> ScenarioSpec:
    """Three well separated classes over four features plus one drifted stretch.

    Class ``c`` sits at ``3 * c`` on every feature (unit sigma), so
    neighbouring class means are 3 sigma apart per feature. The drifted
    segment moves every class by ``+2`` sigma on the first two features and
    ``-2`` sigma on the last two, orthogonal to the axis the classes are
    spread along, so drifted rows stay correctly classified while leaving the
    training scope.
    """
    n_features = 4
    means = tuple(tuple(SEPARATION * c for _ in range(n_features)) for c in range(3))
    drift = (DRIFT, DRIFT, -DRIFT, -DRIFT)
    segments = []
    if batches_before:
        segments.append(StreamSegment(batches_before * batch_size, (), "in"))
    if drifted_batches:
        segments.append(StreamSegment(drifted_batches * batch_size, drift, "out"))
    if batches_after:
        segments.append(StreamSegment(batches_after * batch_size, (), "in"))
    return ScenarioSpec(
        n_classes=3,
        n_features=n_features,
        means=means,
        stds=(1.0,) * n_features,
        n_train=n_train,
        n_test=n_test,
        segments=tuple(segments),
        seed=seed,
    )
