import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import lfilter

from steerid.errors import DegenerateSignalError, EmptyInputError, InsufficientDataError
from steerid.stationarity import (Z_995, AcfProfile, acf, adf_test, aggregate_lag_histogram,
                                  analyze_trip, correlated_lag, mackinnon_crit_1pct, recommend_window,
                                  stationarity_report)

statsmodels = pytest.importorskip("statsmodels.tsa.stattools")


def ar1(phi, n, rng):
    return lfilter([1.0], [1.0, -phi], rng.normal(size=n + 500))[500:]


def test_acf_matches_statsmodels():
    x = ar1(0.7, 2000, np.random.default_rng(1))
    ref = statsmodels.acf(x, nlags=50, fft=False)
    np.testing.assert_allclose(acf(x, 50).rho, ref, atol=1e-12)


def test_acf_band_is_bartlett():
    x = ar1(0.4, 1500, np.random.default_rng(2))
    p = acf(x, 20)
    rho = p.rho
    for h in range(1, 21):
        expect = Z_995 * np.sqrt((1 + 2 * np.sum(rho[1:h] ** 2)) / len(x))
        assert p.band[h] == pytest.approx(expect, rel=1e-12)
    assert p.band[0] == p.band[1]


def test_acf_white_noise_lag0_and_degenerate():
    rng = np.random.default_rng(3)
    assert acf(rng.normal(size=500), 10).rho[0] == 1.0
    with pytest.raises(DegenerateSignalError):
        acf(np.ones(100), 10)
    with pytest.raises(InsufficientDataError):
        acf(np.arange(5.0), 10)


@pytest.mark.parametrize("seed,phi", [(0, 0.5), (1, 0.95), (2, 1.0), (3, 0.0)])
def test_adf_matches_statsmodels(seed, phi):
    x = ar1(phi, 1200, np.random.default_rng(seed)) if phi < 1 else np.cumsum(
        np.random.default_rng(seed).normal(size=1200))
    ref = statsmodels.adfuller(x, regression="c", autolag="AIC")
    res = adf_test(x)
    assert res.statistic == pytest.approx(ref[0], rel=1e-9)
    assert res.lags_used == ref[2] and res.nobs == ref[3]
    assert res.critical_1pct == pytest.approx(ref[4]["1%"], rel=1e-3)


def test_mackinnon_asymptote():
    assert mackinnon_crit_1pct(10 ** 9) == pytest.approx(-3.43035, abs=1e-6)


def test_adf_degenerate_and_short():
    with pytest.raises(DegenerateSignalError):
        adf_test(np.zeros(300))
    with pytest.raises(InsufficientDataError):
        adf_test(np.arange(20.0))


def test_correlated_lag_band_crossing():
    rho = np.r_[1.0, 0.9, 0.5, 0.2, np.zeros(30)]
    p = AcfProfile(rho=rho, n=1000, band=np.full(len(rho), 0.1))
    assert correlated_lag(p) == pytest.approx(0.4)


def test_correlated_lag_requires_staying_inside():
    rho = np.r_[1.0, 0.5, 0.0, 0.0, 0.3, np.zeros(30)]
    p = AcfProfile(rho=rho, n=1000, band=np.full(len(rho), 0.1))
    assert correlated_lag(p) == pytest.approx(0.5)


def test_correlated_lag_none_when_never_inside():
    p = AcfProfile(rho=np.ones(30), n=1000, band=np.full(30, 0.1))
    assert correlated_lag(p) is None


def test_histogram_point_mass_and_recommendation():
    hist = aggregate_lag_histogram([3.6] * 10 + [5.0, 7.2])
    assert hist.mode_s == pytest.approx(3.6)
    assert recommend_window(hist).h_opt_s == 3.5
    assert recommend_window(hist).h_opt_samples == 35


def test_histogram_ties_prefer_shorter():
    assert aggregate_lag_histogram([4.0, 4.0, 6.0, 6.0]).mode_s == pytest.approx(4.0)


def test_histogram_empty():
    with pytest.raises(EmptyInputError):
        aggregate_lag_histogram([])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 200), min_size=1, max_size=40))
def test_recommendation_on_half_second_grid(lag_samples):
    rec = recommend_window(aggregate_lag_histogram([k / 10 for k in lag_samples]))
    assert 2.5 <= rec.h_opt_s <= 10.0
    assert rec.h_opt_s * 2 == int(rec.h_opt_s * 2)


def test_report_skips_nonstationary():
    rng = np.random.default_rng(5)
    res = [analyze_trip(ar1(0.8, 3000, rng), "a", "d"), analyze_trip(np.cumsum(rng.normal(size=3000)), "b", "d")]
    rep = stationarity_report(res)
    assert rep["fleet"]["n_trips"] == 2 and rep["fleet"]["n_stationary"] == 1
    assert rep["trips"][1]["h_cor_s"] is None
