import csv

import numpy as np
import pytest

from forestgp.dataio import (
    ATTRIBUTE_NAMES, Dataset, SynthConfig, dataset_to_csv, generate_synthetic, load_dataset,
    save_dataset, standardize)
from forestgp.errors import DatasetError, InputError


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def test_canonical_attribute_order():
    assert ATTRIBUTE_NAMES[:5] == ("pine_hgm", "pine_dgm", "pine_n", "pine_ba", "pine_v")
    assert ATTRIBUTE_NAMES[5] == "spruce_hgm" and ATTRIBUTE_NAMES[-1] == "decid_v"
    assert len(ATTRIBUTE_NAMES) == 15


def test_default_synthetic_dimensions(tmp_path):
    ds = generate_synthetic()
    assert ds.X.shape == (493, 77) and ds.Y.shape == (493, 15)
    save_dataset(ds, tmp_path / "d.csv")
    header = (tmp_path / "d.csv").read_text().splitlines()[0].split(",")
    assert len(header) == 1 + 15 + 77
    assert load_dataset(tmp_path / "d.csv").n == 493


def test_roundtrip_exact(tmp_path, small_ds):
    save_dataset(small_ds, tmp_path / "a.csv", header_comment="hello")
    back = load_dataset(tmp_path / "a.csv")
    assert back.plot_ids == small_ds.plot_ids
    assert back.X.tobytes() == small_ds.X.tobytes()
    assert back.Y.tobytes() == small_ds.Y.tobytes()


def test_synthetic_deterministic():
    a = dataset_to_csv(generate_synthetic(SynthConfig(n_plots=30, seed=5)))
    b = dataset_to_csv(generate_synthetic(SynthConfig(n_plots=30, seed=5)))
    c = dataset_to_csv(generate_synthetic(SynthConfig(n_plots=30, seed=6)))
    assert a == b and a != c


def test_zero_inflation():
    ds = generate_synthetic(SynthConfig(n_plots=200, zero_inflation=(0.0, 0.0, 1.0)))
    assert np.all(ds.Y[:, 10:] == 0)
    assert np.all(ds.Y[:, :10] > 0)


@pytest.mark.parametrize("mode", ["nonlinear", "copula"])
def test_zero_fraction_matches_config(mode):
    p = (0.1, 0.25, 0.4)
    ds = generate_synthetic(SynthConfig(n_plots=2000, zero_inflation=p, seed=2, mode=mode))
    for k in range(3):
        block = ds.Y[:, 5 * k:5 * k + 5]
        assert abs(np.mean(np.all(block == 0, axis=1)) - p[k]) <= 0.03
    assert np.all(ds.Y.var(axis=0, ddof=1) > 0)


def test_synth_config_validation():
    with pytest.raises(InputError):
        SynthConfig(n_plots=1)
    with pytest.raises(InputError):
        SynthConfig(zero_inflation=(0.1, 1.5, 0.0))
    with pytest.raises(InputError):
        SynthConfig(mode="other")


def test_permuted_columns_identical(tmp_path, small_ds):
    save_dataset(small_ds, tmp_path / "a.csv")
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    perm = list(reversed(range(len(rows[0]))))
    _write_rows(tmp_path / "b.csv", [rows[0][j] for j in perm],
                [[r[j] for j in perm] for r in rows[1:]])
    a, b = load_dataset(tmp_path / "a.csv"), load_dataset(tmp_path / "b.csv")
    assert a.predictor_names == b.predictor_names
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.Y, b.Y)


def _valid_rows(small_ds, tmp_path):
    save_dataset(small_ds, tmp_path / "a.csv")
    return list(csv.reader(open(tmp_path / "a.csv")))


def test_nan_cell_named(tmp_path, small_ds):
    rows = _valid_rows(small_ds, tmp_path)
    rows[4][20] = "nan"
    _write_rows(tmp_path / "bad.csv", rows[0], rows[1:])
    with pytest.raises(DatasetError) as err:
        load_dataset(tmp_path / "bad.csv")
    assert err.value.row == 4 and err.value.column == rows[0][20]


@pytest.mark.parametrize("value, msg", [("abc", "non-numeric"), ("-1", "negative")])
def test_bad_attribute_cells(tmp_path, small_ds, value, msg):
    rows = _valid_rows(small_ds, tmp_path)
    rows[2][3] = value
    _write_rows(tmp_path / "bad.csv", rows[0], rows[1:])
    with pytest.raises(DatasetError, match=msg) as err:
        load_dataset(tmp_path / "bad.csv")
    assert err.value.column == rows[0][3]


def test_missing_column_and_duplicates(tmp_path, small_ds):
    rows = _valid_rows(small_ds, tmp_path)
    _write_rows(tmp_path / "m.csv", rows[0][:5] + rows[0][6:], [r[:5] + r[6:] for r in rows[1:]])
    with pytest.raises(DatasetError) as err:
        load_dataset(tmp_path / "m.csv")
    assert err.value.column == rows[0][5]
    rows[3][0] = rows[1][0]
    _write_rows(tmp_path / "d.csv", rows[0], rows[1:])
    with pytest.raises(DatasetError, match="duplicate plot_id"):
        load_dataset(tmp_path / "d.csv")


def test_empty_file(tmp_path):
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "e.csv")


def test_predictors_only(tmp_path, small_ds):
    ds = Dataset(small_ds.plot_ids, small_ds.X, None, small_ds.predictor_names)
    save_dataset(ds, tmp_path / "x.csv")
    back = load_dataset(tmp_path / "x.csv", require_attributes=False)
    assert back.Y is None and back.X.shape == small_ds.X.shape
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "x.csv")


def test_standardize(rng):
    X = rng.normal(3.0, 2.0, size=(40, 4))
    X[:, 2] = 7.0
    Z, st = standardize(X)
    np.testing.assert_array_equal(st.constant, [False, False, True, False])
    np.testing.assert_array_equal(Z[:, 2], 0.0)
    keep = ~st.constant
    np.testing.assert_allclose(Z[:, keep].mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(Z[:, keep].std(axis=0, ddof=1), 1.0, atol=1e-10)
    T = rng.normal(5.0, 2.0, size=(10, 4))
    Zt, st2 = standardize(T, st)
    assert st2 is st
    np.testing.assert_allclose(Zt[:, 0], (T[:, 0] - st.mean[0]) / st.sd[0])
    assert abs(Zt[:, 0].mean()) > 0.1
