import io

import numpy as np
import pytest

from scopeguard import Dataset, read_dataset_csv, write_dataset_csv
from scopeguard.dataio import DataFormatError


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_round_trip_is_exact(tmp_path, rng):
    data = Dataset(rng.normal(size=(5, 3)), [0, 1, 2, 1, 0], predictions=[0, 1, 1, 1, 0],
                   feature_names=("a", "b", "c"), scope=["in", "in", "out", "out", "in"])
    path = tmp_path / "sub" / "x.csv"
    write_dataset_csv(data, path)
    assert read_dataset_csv(path).equals(data)


def test_reserved_columns_anywhere(tmp_path):
    p = _write(tmp_path, "label,x,prediction,y\n1,0.5,0,2\n0,1.5,0,3\n")
    d = read_dataset_csv(p)
    assert d.feature_names == ("x", "y")
    np.testing.assert_array_equal(d.labels, [1, 0])
    np.testing.assert_array_equal(d.predictions, [0, 0])


def test_label_optional_for_unlabeled_data(tmp_path):
    p = _write(tmp_path, "x\n1\n2\n")
    assert read_dataset_csv(p, require_label=False).labels is None
    with pytest.raises(DataFormatError, match="label"):
        read_dataset_csv(p)


@pytest.mark.parametrize(
    "text, pattern",
    [
        ("x,label\n1,0\noops,1\n", "line 3, column 'x'"),
        ("x,label\n1,0\n2\n", "line 3: expected 2 fields"),
        ("x,label\n1,0\nnan,1\n", "line 3, column 'x': non-finite"),
        ("x,label\n1,0\n1,-2\n", "line 3, column 'label'"),
        ("x,label\n1,0.5\n", "line 2, column 'label'"),
        ("x,label,scope\n1,0,sideways\n", "line 2, column 'scope'"),
        ("", "empty file"),
        ("x,x,label\n1,2,0\n", "duplicate"),
        ("label\n0\n", "no feature columns"),
    ],
)
def test_errors_cite_location(tmp_path, text, pattern):
    with pytest.raises(DataFormatError, match=pattern):
        read_dataset_csv(_write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(DataFormatError, match="cannot open"):
        read_dataset_csv(tmp_path / "nope.csv")


def test_write_to_stream():
    buf = io.StringIO()
    write_dataset_csv(Dataset(np.array([[0.1], [2.0]]), [0, 1]), buf)
    assert buf.getvalue() == "f0,label\n0.1,0\n2.0,1\n"
