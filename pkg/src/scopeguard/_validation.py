"""Input validation helpers shared by the estimators and functions."""
from __future__ import annotations

import math
import numbers

import numpy as np

from .exceptions import EmptySample, InvalidConfig, InvalidValue, SchemaMismatch


def check_sample(values, name="sample") -> np.ndarray:
    """Return ``values`` as a 1-D float array, rejecting empty or non-finite input."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InvalidValue(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise EmptySample(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidValue(f"{name} contains non-finite values")
    return arr


def check_features(X, name="features") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.size else X.reshape(0, 0)
    if X.ndim != 2:
        raise InvalidValue(f"{name} must be a 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        bad = np.argwhere(~np.isfinite(X))[0]
        raise InvalidValue(f"{name} has a non-finite value at row {bad[0]}, column {bad[1]}")
    return X


def check_labels(y, n_rows, name="labels") -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise InvalidValue(f"{name} must be one-dimensional")
    if y.shape[0] != n_rows:
        raise SchemaMismatch(f"{name} has {y.shape[0]} entries for {n_rows} rows")
    if y.size == 0:
        return y.astype(np.int64)
    if y.dtype.kind == "f":
        if not np.all(np.isfinite(y)) or np.any(y != np.round(y)):
            raise InvalidValue(f"{name} must be integer class identifiers")
    elif y.dtype.kind not in "iu":
        raise InvalidValue(f"{name} must be integer class identifiers, got dtype {y.dtype}")
    y = y.astype(np.int64)
    if np.any(y < 0):
        raise InvalidValue(f"{name} must be non-negative")
    return y


def check_count(value, name, minimum=0) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InvalidConfig(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise InvalidConfig(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_probability(value, name, *, closed=False) -> float:
    value = float(value)
    ok = 0.0 <= value <= 1.0 if closed else 0.0 < value < 1.0
    if not ok:
        interval = "[0, 1]" if closed else "(0, 1)"
        raise InvalidConfig(f"{name} must lie in {interval}, got {value}")
    return value


def ceil_count(value: float) -> int:
    """Ceiling that tolerates float noise such as ``100 * 1.1 = 110.00000000000001``."""
    return int(math.ceil(round(value, 9)))
