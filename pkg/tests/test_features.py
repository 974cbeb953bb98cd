import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from steerid.errors import BalanceError, ConfigurationError, TooShortError
from steerid.features import (Segment, SegmentMatrix, assemble_batch, build_segment_matrix, build_segments,
                              log_fft_window, read_feature_cache, segment_driver, votes_for,
                              window_samples, write_feature_cache)
from steerid.ingest import UniformTrip


def trip(n, tid="t", seed=0):
    rng = np.random.default_rng(seed)
    return UniformTrip(trip_id=tid, driver_id="d", steering=rng.normal(size=n),
                       velocity=rng.uniform(5, 20, n), start_ms=0)


def test_lft_of_impulse():
    x = np.zeros(8)
    x[0] = 3.0
    f = log_fft_window(x, np.full(8, 4.0))
    np.testing.assert_allclose(f.lft, np.full(8, 2.0))
    assert f.mean_velocity == 4.0
    assert f.as_vector().shape == (9,)


def test_lft_matches_direct_dft():
    rng = np.random.default_rng(1)
    x = rng.normal(size=35)
    k = np.arange(35)
    dft = np.exp(-2j * np.pi * np.outer(k, k) / 35) @ x
    np.testing.assert_allclose(log_fft_window(x, x).lft, np.log2(np.abs(dft) + 1), atol=1e-10)


def test_window_samples_validation():
    assert window_samples(3.5) == 35
    with pytest.raises(ConfigurationError):
        window_samples(3.55)


def test_votes_for_fixed_point():
    assert votes_for(900, 3.5) == (252, 42)


@settings(max_examples=40, deadline=None)
@given(st.integers(25, 100))
def test_votes_for_multiple_of_six(w10):
    F, M = votes_for(900, w10 / 10)
    assert F % 6 == 0 and M == F // 6 and F <= 9000 // w10 < F + 6


def test_segment_driver_spans_cover_stream():
    segs = segment_driver("d", [trip(500, "a"), trip(900, "b"), trip(700, "c")], segment_s=60)
    assert [len(s) for s in segs] == [600, 600, 600]
    assert segs[0].spans == [("a", 0, 500), ("b", 0, 100)]
    assert segs[2].spans == [("b", 700, 900), ("c", 0, 400)]
    assert [s.index for s in segs] == [0, 1, 2]


def test_build_segments_balance():
    with pytest.raises(BalanceError):
        build_segments({"d": [trip(1000)]}, n_segments=2, segment_s=60)
    out = build_segments({"d": [trip(2000)]}, n_segments=2, segment_s=60)
    assert len(out["d"]) == 2


def test_segment_matrix_truncates_to_votes():
    seg = Segment("d", np.zeros(9000), np.ones(9000))
    m = build_segment_matrix(seg, 35)
    assert m.features.shape == (252, 36) and m.n_votes == 42


def test_segment_matrix_too_short():
    with pytest.raises(TooShortError):
        build_segment_matrix(Segment("d", np.zeros(100), np.ones(100)), 35)


def test_assemble_batch_balanced_draws():
    pool = {d: [SegmentMatrix(d, np.full((12, 5), i))] for i, d in enumerate(["a", "b", "c"])}
    b = assemble_batch(pool, np.random.default_rng(0), size=3000)
    assert b.x.shape == (3000, 12, 5)
    counts = np.bincount(b.labels, minlength=3)
    assert np.all(np.abs(counts - 1000) < 100)
    np.testing.assert_array_equal(b.x[:, 0, 0], b.labels)


def test_assemble_batch_shape_mismatch():
    pool = {"a": [SegmentMatrix("a", np.zeros((12, 5)))], "b": [SegmentMatrix("b", np.zeros((6, 5)))]}
    with pytest.raises(ConfigurationError):
        assemble_batch(pool, np.random.default_rng(0))


def test_feature_cache_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    mats = [SegmentMatrix(d, rng.normal(size=(12, 8)).astype(np.float32).astype(float)) for d in "ab"]
    write_feature_cache(mats, tmp_path / "c.bin")
    back = read_feature_cache(tmp_path / "c.bin")
    assert [m.driver_id for m in back] == ["a", "b"]
    for m, b in zip(mats, back):
        np.testing.assert_array_equal(m.features, b.features)


def test_feature_cache_truncated(tmp_path):
    mats = [SegmentMatrix("a", np.zeros((12, 8)))]
    write_feature_cache(mats, tmp_path / "c.bin")
    blob = (tmp_path / "c.bin").read_bytes()
    (tmp_path / "c.bin").write_bytes(blob[:-10])
    with pytest.raises(ConfigurationError):
        read_feature_cache(tmp_path / "c.bin")
