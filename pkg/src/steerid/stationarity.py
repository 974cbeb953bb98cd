"""Unit-root testing, autocorrelation with significance band, and window selection."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .errors import DegenerateSignalError, EmptyInputError, InsufficientDataError
from .ingest import RATE_HZ

H_MAX = 200  # 20 s at 10 Hz
Z_995 = float(norm.ppf(0.995))
STAY_LAGS = 10  # 1 s inside the band
BIN_WIDTH_S = 0.1
HIST_RANGE_S = 20.0
WINDOW_MIN_S = 2.5
WINDOW_MAX_S = 10.0
WINDOW_STEP_S = 0.5

# MacKinnon (2010) response surface, constant-only regression, one variable, 1% level
_TAU_C_1PCT = (-3.43035, -6.5393, -16.786, -79.433)


@dataclass
class AcfProfile:
    rho: np.ndarray
    n: int
    band: np.ndarray

    @property
    def h_max(self) -> int:
        return len(self.rho) - 1


@dataclass
class AdfResult:
    statistic: float
    critical_1pct: float
    reject_unit_root: bool
    lags_used: int
    nobs: int


@dataclass
class LagHistogram:
    bin_width: float
    counts: np.ndarray
    mode_s: float
    median_s: float
    mean_s: float

    @property
    def bin_centers(self) -> np.ndarray:
        return self.bin_width * np.arange(len(self.counts))


@dataclass
class WindowRecommendation:
    h_opt_s: float
    h_opt_samples: int
    source: str = "mode"


def acf(x, h_max: int = H_MAX) -> AcfProfile:
    """Sample autocorrelation up to ``h_max`` with a Bartlett band at the two-sided 1% level.

    Uses the biased (1/n) autocovariance estimator.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if not 1 <= h_max < n:
        raise InsufficientDataError(f"need len(x) > h_max >= 1, got n={n}, h_max={h_max}")
    d = x - x.mean()
    gamma = np.array([d[: n - h] @ d[h:] for h in range(h_max + 1)]) / n
    if gamma[0] <= 0 or not np.isfinite(gamma[0]):
        raise DegenerateSignalError("constant series has zero variance")
    rho = gamma / gamma[0]
    rho[0] = 1.0
    # var(rho(h)) ~ (1 + 2 sum_{k=1}^{h-1} rho(k)^2) / n; lag 0 reuses lag 1
    cum = np.concatenate(([0.0, 0.0], np.cumsum(rho[1:h_max] ** 2)))
    band = Z_995 * np.sqrt((1.0 + 2.0 * cum) / n)
    return AcfProfile(rho=rho, n=n, band=band)


def mackinnon_crit_1pct(nobs: int) -> float:
    b0, b1, b2, b3 = _TAU_C_1PCT
    return b0 + b1 / nobs + b2 / nobs**2 + b3 / nobs**3


def _ols(y: np.ndarray, X: np.ndarray):
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise DegenerateSignalError("singular ADF regression matrix")
    resid = y - X @ beta
    return beta, float(resid @ resid)


def _adf_design(x: np.ndarray, p: int, start: int):
    """Regress dx[t] on (1, x[t-1], dx[t-1..t-p]) for t-indices of dx >= start."""
    dx = np.diff(x)
    rows = np.arange(start, len(dx))
    cols = [np.ones(len(rows)), x[rows]]
    cols += [dx[rows - j] for j in range(1, p + 1)]
    return dx[rows], np.column_stack(cols)


def adf_test(x, max_lag: int | None = None) -> AdfResult:
    """Augmented Dickey-Fuller test with a constant and AIC lag selection.

    Candidate lag orders are compared on a common sample; the chosen order
    is then refitted on all observations it allows.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n < 50:
        raise InsufficientDataError(f"ADF needs at least 50 samples, got {n}")
    if np.ptp(x) == 0:
        raise DegenerateSignalError("constant series")
    p_max = int(math.floor(12 * (n / 100) ** 0.25)) if max_lag is None else max_lag
    p_max = min(p_max, n // 2 - 3)

    # nested models share a common sample; one QR of the widest design gives
    # every candidate's SSR as ssr_full + sum of the dropped Q'y components
    y, X = _adf_design(x, p_max, p_max)
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-12 * max(diag.max(), 1.0):
        raise DegenerateSignalError("singular ADF regression matrix")
    qy = Q.T @ y
    resid = y - Q @ qy
    tail = np.concatenate((np.cumsum((qy ** 2)[::-1])[::-1], [0.0]))
    ssr_full = float(resid @ resid)
    m = len(y)
    best_p, best_aic = 0, math.inf
    for p in range(p_max + 1):
        k = p + 2
        ssr = ssr_full + float(tail[k])
        aic = m * (math.log(2 * math.pi) + math.log(ssr / m) + 1) + 2 * k
        if aic < best_aic:
            best_p, best_aic = p, aic

    y, X = _adf_design(x, best_p, best_p)
    beta, ssr = _ols(y, X)
    m, k = X.shape
    sigma2 = ssr / (m - k)
    xtx_inv = np.linalg.inv(X.T @ X)
    se = math.sqrt(sigma2 * xtx_inv[1, 1])
    if se == 0 or not math.isfinite(se):
        raise DegenerateSignalError("zero standard error in ADF regression")
    stat = float(beta[1] / se)
    crit = mackinnon_crit_1pct(m)
    return AdfResult(statistic=stat, critical_1pct=crit, reject_unit_root=stat < crit,
                     lags_used=best_p, nobs=m)


def correlated_lag(profile: AcfProfile, stay: int = STAY_LAGS, rate_hz: int = RATE_HZ) -> float | None:
    """First lag (in seconds) after which the ACF stays inside the band for ``stay`` lags."""
    inside = np.abs(profile.rho) < profile.band
    h_max = profile.h_max
    for h in range(1, h_max + 1):
        if inside[h: min(h + stay - 1, h_max) + 1].all():
            return h / rate_hz
    return None


def aggregate_lag_histogram(lags: Sequence[float], bin_width: float = BIN_WIDTH_S,
                            max_s: float = HIST_RANGE_S) -> LagHistogram:
    """Histogram of correlated lags with bins centred on multiples of ``bin_width``.

    Bin ``k`` covers ``[(k - 1/2) * bin_width, (k + 1/2) * bin_width)`` so a
    lag on the sampling grid sits at its bin centre.
    """
    lags = np.asarray(list(lags), dtype=np.float64)
    if lags.size == 0:
        raise EmptyInputError("no correlated lags to aggregate")
    n_bins = int(round(max_s / bin_width)) + 1
    idx = np.clip(np.floor(lags / bin_width + 0.5).astype(int), 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    top = int(np.argmax(counts))  # first maximum, i.e. the smaller lag on ties
    return LagHistogram(bin_width=bin_width, counts=counts,
                        mode_s=round(top * bin_width, 10),
                        median_s=float(np.median(lags)), mean_s=float(lags.mean()))


def recommend_window(hist: LagHistogram, rate_hz: int = RATE_HZ) -> WindowRecommendation:
    h = min(max(hist.mode_s, WINDOW_MIN_S), WINDOW_MAX_S)
    h = math.floor(h / WINDOW_STEP_S + 0.5) * WINDOW_STEP_S
    return WindowRecommendation(h_opt_s=h, h_opt_samples=int(round(h * rate_hz)))


@dataclass
class TripStationarity:
    trip_id: str
    driver_id: str
    adf: AdfResult | None
    h_cor_s: float | None
    error: str | None = None


def analyze_trip(steering, trip_id: str = "", driver_id: str = "") -> TripStationarity:
    try:
        res = adf_test(steering)
    except DegenerateSignalError as exc:
        return TripStationarity(trip_id, driver_id, None, None, str(exc))
    h_cor = None
    if res.reject_unit_root:
        h_cor = correlated_lag(acf(steering))
    return TripStationarity(trip_id, driver_id, res, h_cor)


def stationarity_report(results: Sequence[TripStationarity]) -> dict:
    """JSON-ready per-trip rows plus fleet summary over stationary trips with a found lag."""
    trips = [{
        "trip_id": r.trip_id,
        "driver_id": r.driver_id,
        "adf_statistic": None if r.adf is None else r.adf.statistic,
        "critical_1pct": None if r.adf is None else r.adf.critical_1pct,
        "lags_used": None if r.adf is None else r.adf.lags_used,
        "reject": bool(r.adf is not None and r.adf.reject_unit_root),
        "h_cor_s": r.h_cor_s,
    } for r in results]
    lags = [r.h_cor_s for r in results if r.h_cor_s is not None]
    fleet: dict = {"n_trips": len(results),
                   "n_stationary": sum(t["reject"] for t in trips),
                   "n_with_lag": len(lags)}
    if lags:
        hist = aggregate_lag_histogram(lags)
        rec = recommend_window(hist)
        fleet.update(mode_s=hist.mode_s, median_s=hist.median_s, mean_s=hist.mean_s,
                     recommended_window_s=rec.h_opt_s,
                     recommended_window_samples=rec.h_opt_samples,
                     histogram={"bin_width_s": hist.bin_width,
                                "counts": hist.counts.tolist()})
    else:
        fleet.update(mode_s=None, median_s=None, mean_s=None, recommended_window_s=None)
    return {"trips": trips, "fleet": fleet}
