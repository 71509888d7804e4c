"""Sample-size planning from Cohen's d effect sizes."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ._validation import ceil_count, check_count, check_probability, check_sample
from .ecdf import Dataset
from .exceptions import (
    DegenerateVariance,
    EffectTooSmall,
    InvalidConfig,
    InvalidValue,
    NoUsableEffect,
    SchemaMismatch,
)

logger = logging.getLogger(__name__)

# Acklam's rational approximation to the normal quantile.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def inverse_normal_cdf(p: float) -> float:
    """Standard normal quantile.

    Rational approximation (relative error ~1e-9) followed by one Newton step
    against the erfc-based CDF.
    """
    p = float(p)
    if not (0.0 < p < 1.0) or math.isnan(p):
        raise InvalidValue(f"p must lie strictly between 0 and 1, got {p}")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        )
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    density = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    if density > 0.0:
        if p > 0.5:
            # refine on the upper tail to avoid cancellation in cdf(x) - p
            x -= ((1.0 - p) - 0.5 * math.erfc(x / math.sqrt(2.0))) / density
        else:
            x -= (normal_cdf(x) - p) / density
    return x


def cohens_d(x, y) -> float:
    """Standardized mean difference ``(mean(x) - mean(y)) / s_pooled``.

    ``s_pooled`` pools the two unbiased (n - 1) variances.
    """
    x = check_sample(x, "x")
    y = check_sample(y, "y")
    n, m = x.shape[0], y.shape[0]
    if n < 2 or m < 2:
        raise InvalidValue("Cohen's d needs at least two values per sample")
    diff = float(np.mean(x) - np.mean(y))
    pooled_var = ((n - 1) * np.var(x, ddof=1) + (m - 1) * np.var(y, ddof=1)) / (n + m - 2)
    if pooled_var == 0.0:
        if diff == 0.0:
            return 0.0
        raise DegenerateVariance("both samples are constant but their means differ")
    return diff / math.sqrt(pooled_var)


def required_sample_size(d: float, alpha: float = 0.05, power: float = 0.8, d_floor: float = 0.2) -> int:
    """Per-group size for a two-sided two-sample test, normal approximation.

    ``n = ceil(2 * ((z_{1-alpha/2} + z_power) / |d|)**2)``
    """
    alpha = check_probability(alpha, "alpha")
    power = check_probability(power, "power")
    d = abs(float(d))
    if not math.isfinite(d):
        raise InvalidValue("effect size must be finite")
    if d < d_floor or d == 0.0:
        raise EffectTooSmall(f"|d| = {d:.4g} is below the floor {d_floor}")
    z = inverse_normal_cdf(1.0 - alpha / 2.0) + inverse_normal_cdf(power)
    return ceil_count(2.0 * (z / d) ** 2)


@dataclass(frozen=True)
class PowerSpec:
    alpha: float = 0.05
    power: float = 0.8
    safety_factor: float = 1.3
    d_floor: float = 0.2
    batch_multiple: Optional[int] = None

    def __post_init__(self):
        check_probability(self.alpha, "alpha")
        check_probability(self.power, "power")
        if not self.safety_factor >= 1.0:
            raise InvalidConfig(f"safety_factor must be >= 1, got {self.safety_factor}")
        if not self.d_floor > 0.0:
            raise InvalidConfig("d_floor must be positive")
        if self.batch_multiple is not None:
            check_count(self.batch_multiple, "batch_multiple", minimum=1)


@dataclass
class SampleSizePlan:
    cells: Dict[Tuple[int, str], dict]  # (class, feature) -> {"d", "n_required"}
    n_max: int
    n_final: int
    excluded_cells: List[Tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cells": [
                {"class": c, "feature": f, "d": v["d"], "n_required": v["n_required"]}
                for (c, f), v in self.cells.items()
            ],
            "n_max": self.n_max,
            "n_final": self.n_final,
            "excluded_cells": [{"class": c, "feature": f} for c, f in self.excluded_cells],
        }


def finalize_sample_size(n_max: int, safety_factor: float = 1.3, batch_multiple: Optional[int] = None) -> int:
    """Apply the safety factor and round up to a whole number of ``batch_multiple``."""
    n = ceil_count(n_max * safety_factor)
    if batch_multiple:
        n = batch_multiple * math.ceil(n / batch_multiple)
    return n


def plan_from_effects(effects: Dict[Tuple[int, str], float], spec: PowerSpec = PowerSpec()) -> SampleSizePlan:
    """Turn per-cell effect sizes into a plan using the max rule."""
    cells, excluded = {}, []
    for key, d in effects.items():
        if d is None or abs(d) < spec.d_floor:
            excluded.append(key)
            continue
        cells[key] = {
            "d": float(d),
            "n_required": required_sample_size(d, spec.alpha, spec.power, spec.d_floor),
        }
    if excluded:
        logger.warning("%d of %d cells excluded: |d| below floor %s or undefined",
                       len(excluded), len(effects), spec.d_floor)
    if not cells:
        raise NoUsableEffect(
            f"no (class, feature) cell reaches |d| >= {spec.d_floor}; set the batch size manually"
        )
    n_max = max(v["n_required"] for v in cells.values())
    n_final = finalize_sample_size(n_max, spec.safety_factor, spec.batch_multiple)
    return SampleSizePlan(cells=cells, n_max=n_max, n_final=n_final, excluded_cells=excluded)


def plan_sample_size(train: Dataset, test: Dataset, spec: PowerSpec = PowerSpec()) -> SampleSizePlan:
    """Per (class, feature) Cohen's d between train and test, reduced by the max rule.

    Cells whose effect cannot be computed (fewer than two rows on a side, or
    both sides constant) are excluded like below-floor cells.
    """
    if train.feature_names != test.feature_names:
        raise SchemaMismatch("train and test feature columns differ")
    if train.labels is None or test.labels is None:
        raise InvalidValue("power planning needs labels on both datasets")
    train_classes = set(train.classes().tolist())
    test_classes = set(test.classes().tolist())
    if train_classes != test_classes:
        raise SchemaMismatch(
            f"class sets differ: train {sorted(train_classes)}, test {sorted(test_classes)}"
        )
    effects = {}
    for c in sorted(train_classes):
        a = train.features[train.labels == c]
        b = test.features[test.labels == c]
        for j, name in enumerate(train.feature_names):
            try:
                effects[(int(c), name)] = cohens_d(a[:, j], b[:, j])
            except (InvalidValue, DegenerateVariance):
                effects[(int(c), name)] = None
    return plan_from_effects(effects, spec)
