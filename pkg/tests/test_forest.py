import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from steerid.errors import CheckpointError, FitError
from steerid.forest import (classify_segment, fit_forest, fit_tree, load_forest, save_forest,
                            summarize_window, summary_matrix)


def blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(3, size=n)
    X = rng.normal(size=(n, 4)) + 4 * y[:, None]
    return X, y


def test_summary_by_hand():
    s = summarize_window([1.0, 2.0, 3.0, 4.0], [10.0, 20.0])
    assert (s.mean, s.min, s.max, s.median) == (2.5, 1.0, 4.0, 2.5)
    assert s.std == pytest.approx(np.sqrt(1.25))
    assert s.iqr == pytest.approx(1.5)
    assert s.mean_velocity == 15.0


def test_summary_matrix_matches_scalar():
    rng = np.random.default_rng(0)
    steer, vel = rng.normal(size=100), rng.normal(size=100)
    M = summary_matrix(steer, vel, 30)
    assert M.shape == (3, 7)
    np.testing.assert_allclose(M[1], summarize_window(steer[30:60], vel[30:60]).as_vector())


def test_tree_fits_separable_data():
    X, y = blobs()
    tree = fit_tree(X, y, 3, np.random.default_rng(0), max_features=4)
    assert np.mean(tree.predict(X) == y) == 1.0


def test_forest_accuracy_and_oob():
    X, y = blobs()
    f = fit_forest(X, y, np.random.default_rng(1), n_trees=15)
    Xt, yt = blobs(seed=9)
    assert np.mean(f.predict(Xt) == yt) > 0.95
    assert f.oob_accuracy > 0.9


def test_forest_single_class():
    with pytest.raises(FitError):
        fit_forest(np.zeros((5, 2)), np.zeros(5, dtype=int), np.random.default_rng(0))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 100))
def test_monotone_transform_invariance(seed):
    X, y = blobs(80, seed)
    a = fit_forest(X, y, np.random.default_rng(seed), n_trees=5)
    b = fit_forest(np.exp(X / 4), y, np.random.default_rng(seed), n_trees=5)
    np.testing.assert_array_equal(a.predict(X), b.predict(np.exp(X / 4)))


def test_classify_segment_majority():
    X, y = blobs()
    f = fit_forest(X, y, np.random.default_rng(1), n_trees=10)
    assert classify_segment(f, X[y == 2]) == 2


def test_forest_roundtrip(tmp_path):
    X, y = blobs()
    f = fit_forest(X, y, np.random.default_rng(1), n_trees=5)
    save_forest(f, tmp_path / "f.bin")
    g = load_forest(tmp_path / "f.bin")
    np.testing.assert_array_equal(f.tree_votes(X), g.tree_votes(X))
    assert g.oob_accuracy == f.oob_accuracy
    blob = (tmp_path / "f.bin").read_bytes()
    (tmp_path / "f.bin").write_bytes(blob[:-12] + blob[-4:])
    with pytest.raises(CheckpointError):
        load_forest(tmp_path / "f.bin")
