import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from infocels.data import (LabeledDataset, ParseError, TimeSeries, load_ucr, make_synthetic,
                           read_series_tsv, save_ucr, subsample, write_series_tsv, z_normalize)


def _write(tmp_path, text, name="X_TRAIN.tsv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_single_line(tmp_path):
    # a second class is needed for a valid dataset (C >= 2)
    ds = load_ucr(_write(tmp_path, "1\t0.5\t0.3\t-0.1\n2\t0\t0\t0\n"))
    assert len(ds) == 2 and ds.length == 3
    assert ds.y[0] == 0 and ds.raw_label(0) == 1
    np.testing.assert_array_equal(ds.X[0], [0.5, 0.3, -0.1])
    assert ds.name == "X"


def test_labels_remapped_first_seen(tmp_path):
    ds = load_ucr(_write(tmp_path, "-1,1,2\n1,3,4\n-1,5,6\n"))
    assert list(ds.y) == [0, 1, 0]
    assert ds.num_classes == 2 and ds.raw_label(1) == 1 and ds.raw_label(0) == -1


def test_ragged_rows_rejected(tmp_path):
    rows = ["1\t" + "\t".join(["0.1"] * 96), "2\t" + "\t".join(["0.1"] * 95)]
    with pytest.raises(ParseError, match="line 2"):
        load_ucr(_write(tmp_path, "\n".join(rows)))


def test_non_numeric_rejected(tmp_path):
    with pytest.raises(ParseError, match="line 2"):
        load_ucr(_write(tmp_path, "1 2 3\n1 x 3\n"))


def test_single_class_rejected(tmp_path):
    with pytest.raises(ValueError, match="single class"):
        load_ucr(_write(tmp_path, "1\t0.5\t0.3\t-0.1\n"))


def test_empty_and_missing(tmp_path):
    with pytest.raises(ParseError):
        load_ucr(_write(tmp_path, "\n\n"))
    with pytest.raises(FileNotFoundError):
        load_ucr(tmp_path / "nope.tsv")


def test_z_normalize_examples():
    ds = LabeledDataset(np.array([[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]]), np.array([0, 1]), 2)
    z = z_normalize(ds)
    np.testing.assert_allclose(z.X[0], [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-12)
    np.testing.assert_array_equal(z.X[1], [0.0, 0.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 10), elements=st.floats(-1e3, 1e3)))
def test_z_normalize_moments(X):
    z = z_normalize(LabeledDataset(X, np.array([0, 1, 0]), 2))
    for row, orig in zip(z.X, X):
        if np.std(orig) > 1e-6 * max(1.0, np.abs(orig).max()):
            assert abs(row.mean()) < 1e-9
            assert abs(row.std() - 1) < 1e-9


def test_subsample():
    ds = make_synthetic(n_per_class=450, length=8)
    a, b = subsample(ds, 100, 7), subsample(ds, 100, 7)
    assert len(a) == 100
    np.testing.assert_array_equal(a.X, b.X)
    small = make_synthetic(n_per_class=14, length=8)
    assert len(subsample(small, 100, 7)) == 28
    with pytest.raises(ValueError):
        subsample(ds, 0, 7)


def test_timeseries_validation():
    with pytest.raises(ValueError):
        TimeSeries(np.array([1.0]))
    with pytest.raises(ValueError):
        TimeSeries(np.array([1.0, np.nan]))
    ts = TimeSeries(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        ts.values[0] = 3.0


def test_save_load_round_trip(tmp_path):
    ds = make_synthetic(n_per_class=5, length=16, seed=3)
    for delim in ("\t", ","):
        p = tmp_path / f"d{ord(delim)}.txt"
        save_ucr(ds, p, delim)
        back = load_ucr(p)
        np.testing.assert_allclose(back.X, ds.X, rtol=1e-8)
        np.testing.assert_array_equal(back.y, ds.y)


def test_series_tsv_round_trip(tmp_path):
    rows = np.random.default_rng(0).standard_normal((4, 7))
    write_series_tsv(tmp_path / "a.tsv", rows, [0, 1, 1, 0])
    X, y = read_series_tsv(tmp_path / "a.tsv")
    np.testing.assert_allclose(X, rows, rtol=1e-8)
    assert list(y) == [0, 1, 1, 0]
    write_series_tsv(tmp_path / "b.tsv", rows)
    np.testing.assert_allclose(read_series_tsv(tmp_path / "b.tsv", labelled=False), rows, rtol=1e-8)


def test_make_synthetic_deterministic():
    a, b = make_synthetic(seed=4), make_synthetic(seed=4)
    np.testing.assert_array_equal(a.X, b.X)
    assert a.X.shape == (50, 64)
    assert set(a.y) == {0, 1}
