"""Dataset CSV reading and writing.

Layout: one header row, feature columns in file order, plus the reserved
columns ``label``, ``prediction`` and ``scope`` wherever they appear.
"""
from __future__ import annotations

import csv
import math
import sys
from pathlib import Path

import numpy as np

from .ecdf import Dataset
from .exceptions import InvalidValue

RESERVED = ("label", "prediction", "scope")


class DataFormatError(InvalidValue):
    pass


def _open(source):
    if source in ("-", None):
        return sys.stdin, False
    try:
        return open(source, newline="", encoding="utf-8"), True
    except OSError as exc:
        raise DataFormatError(f"{source}: cannot open ({exc.strerror})") from exc


def _parse_int(text, where):
    try:
        value = float(text)
    except ValueError:
        raise DataFormatError(f"{where}: expected an integer class id, got {text!r}") from None
    if not math.isfinite(value) or value != int(value) or value < 0:
        raise DataFormatError(f"{where}: expected a non-negative integer class id, got {text!r}")
    return int(value)


def read_dataset_csv(source, require_label: bool = True) -> Dataset:
    """Parse a dataset CSV from a path, or stdin when ``source`` is ``"-"``.

    Raises
    ------
    DataFormatError
        With the file name, line number and column of the first bad cell.
    """
    fh, owned = _open(source)
    name = "<stdin>" if not owned else str(source)
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{name}: empty file, expected a header row") from None
        if len(set(header)) != len(header):
            raise DataFormatError(f"{name}: duplicate column names in header")
        if require_label and "label" not in header:
            raise DataFormatError(f"{name}: missing required 'label' column")
        feat_cols = [i for i, h in enumerate(header) if h not in RESERVED]
        if not feat_cols:
            raise DataFormatError(f"{name}: no feature columns")
        pos = {h: i for i, h in enumerate(header)}

        X, labels, preds, scope = [], [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{name}: line {line}: expected {len(header)} fields, found {len(row)}"
                )
            vals = []
            for i in feat_cols:
                cell = row[i].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{name}: line {line}, column '{header[i]}': not a number: {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataFormatError(
                        f"{name}: line {line}, column '{header[i]}': non-finite value {cell!r}"
                    )
                vals.append(v)
            X.append(vals)
            if "label" in pos:
                labels.append(_parse_int(row[pos["label"]].strip(), f"{name}: line {line}, column 'label'"))
            if "prediction" in pos:
                preds.append(_parse_int(row[pos["prediction"]].strip(), f"{name}: line {line}, column 'prediction'"))
            if "scope" in pos:
                flag = row[pos["scope"]].strip()
                if flag not in ("in", "out"):
                    raise DataFormatError(f"{name}: line {line}, column 'scope': expected 'in' or 'out'")
                scope.append(flag)
    finally:
        if owned:
            fh.close()

    features = np.asarray(X, dtype=float).reshape(len(X), len(feat_cols))
    return Dataset(
        features,
        labels=np.asarray(labels, dtype=np.int64) if "label" in pos else None,
        predictions=np.asarray(preds, dtype=np.int64) if "prediction" in pos else None,
        feature_names=tuple(header[i] for i in feat_cols),
        scope=np.asarray(scope, dtype=object) if "scope" in pos else None,
    )


def write_dataset_csv(data: Dataset, dest) -> None:
    """Write ``data`` with ``repr`` floats so a read-back is exact."""
    header = list(data.feature_names)
    extra = [(n, getattr(data, a)) for n, a in
             (("label", "labels"), ("prediction", "predictions"), ("scope", "scope"))
             if getattr(data, a) is not None]
    header += [n for n, _ in extra]

    def dump(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n_samples):
            row = [repr(float(v)) for v in data.features[i]]
            row += [str(col[i]) for _, col in extra]
            w.writerow(row)

    if hasattr(dest, "write"):
        dump(dest)
    else:
        Path(dest).parent.mkdir(parents=True, exist_ok=True)
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            dump(fh)
