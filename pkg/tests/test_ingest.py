import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from steerid.errors import FormatError, InsufficientDataError, RowError
from steerid.ingest import (IngestStats, RawSample, clean_samples, enforce_min_length, ingest_samples,
                            load_fleet, parse_trip_csv, quadratic_interpolate, resample_uniform,
                            split_on_gaps, write_manifest, write_raw_csv, write_trip_csv)


def _samples(ts, steer=None, vel=None):
    steer = steer if steer is not None else [float(t) / 1000 for t in ts]
    vel = vel if vel is not None else [10.0] * len(ts)
    return [RawSample(float(t), s, v, True) for t, s, v in zip(ts, steer, vel)]


def test_parse_roundtrip(tmp_path):
    raw = [RawSample(0.0, 1.5, 10.0, True), RawSample(100.0, None, 11.0, True),
           RawSample(205.0, -2.25, None, False)]
    write_raw_csv(raw, tmp_path / "t.csv")
    assert parse_trip_csv(tmp_path / "t.csv") == raw


def test_parse_bad_header(tmp_path):
    (tmp_path / "t.csv").write_text("a,b,c,d\n0,1,2,1\n")
    with pytest.raises(FormatError):
        parse_trip_csv(tmp_path / "t.csv")


def test_parse_bad_timestamp_reports_line(tmp_path):
    (tmp_path / "t.csv").write_text(
        "timestamp_ms,steering_deg,speed_mps,gps_valid\n0,1,2,1\nxx,1,2,1\n")
    with pytest.raises(RowError) as exc:
        parse_trip_csv(tmp_path / "t.csv")
    assert exc.value.line == 3


def test_clean_drops_missing_outage_and_backsteps():
    raw = [RawSample(0, 1.0, 1.0, True), RawSample(100, None, 1.0, True),
           RawSample(200, 1.0, 1.0, False), RawSample(300, 1.0, 1.0, True),
           RawSample(250, 1.0, 1.0, True), RawSample(300, 2.0, 1.0, True),
           RawSample(400, 1.0, 1.0, True)]
    assert [s.timestamp for s in clean_samples(raw)] == [0, 300, 400]


def test_split_on_gaps():
    pieces = split_on_gaps(_samples([0, 100, 2100, 4200, 4300]))
    assert [[s.timestamp for s in p] for p in pieces] == [[0, 100, 2100], [4200, 4300]]


def test_interpolation_exact_at_nodes():
    rng = np.random.default_rng(0)
    t = np.cumsum(rng.uniform(50, 150, 40))
    y = rng.normal(size=40)
    np.testing.assert_allclose(quadratic_interpolate(t, y, t), y, rtol=0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_interpolation_reproduces_quadratics(seed, a, b, c):
    rng = np.random.default_rng(seed)
    t = np.cumsum(rng.uniform(60, 140, 50))
    s = t / 1000
    grid = np.linspace(t[0], t[-1], 123)
    f = lambda x: a + b * x + c * x * x
    np.testing.assert_allclose(quadratic_interpolate(t, f(s), grid), f(grid / 1000), atol=1e-9)


def test_interpolation_needs_three_points():
    with pytest.raises(InsufficientDataError):
        quadratic_interpolate(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([0.5]))


def test_resample_grid_is_absolute():
    trip = resample_uniform(_samples([37, 140, 260, 333, 470, 512]))
    np.testing.assert_array_equal(trip.timestamps_ms, [100, 200, 300, 400, 500])
    np.testing.assert_allclose(trip.steering, trip.timestamps_ms / 1000, atol=1e-12)


def test_min_length_dismissal():
    short = resample_uniform(_samples(np.arange(2999) * 100))
    long = resample_uniform(_samples(np.arange(3000) * 100))
    assert enforce_min_length(short) is None
    assert enforce_min_length(long) is long


def test_ingest_splits_and_counts():
    ts = list(np.arange(3500) * 100) + list(350_000 + 5000 + np.arange(3200) * 100) + [10 ** 7]
    stats = IngestStats()
    trips = ingest_samples(_samples(ts), "t", "d", stats)
    assert [t.trip_id for t in trips] == ["t#0", "t#1"]
    assert stats.rows == len(ts) and stats.pieces == 3 and stats.dismissed == 1


def test_load_fleet_and_writers(tmp_path):
    trip = resample_uniform(_samples(np.arange(3100) * 100), trip_id="a", driver_id="d1")
    (tmp_path / "trips").mkdir()
    write_trip_csv(trip, tmp_path / "trips/a.csv")
    write_manifest([("d1", "trips/a.csv")], tmp_path / "manifest.csv")
    fleet = load_fleet(tmp_path)
    assert list(fleet) == ["d1"]
    np.testing.assert_array_equal(fleet["d1"][0].steering, trip.steering)


def test_load_fleet_missing_manifest(tmp_path):
    with pytest.raises(FormatError):
        load_fleet(tmp_path)
