"""Synthetic driver fleet: stationary AR(2) steering with per-driver spectral signatures."""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigurationError
from .ingest import RATE_HZ, STEP_MS, RawSample, write_manifest, write_raw_csv

PRESETS = {
    # resonance range (Hz), minimum peak gap (Hz), pole radius range,
    # innovation std range (deg), base speed range (m/s)
    "separable": dict(resonance=(0.1, 3.0), min_gap_hz=0.15, radius=(0.93, 0.95),
                      innovation=(0.8, 2.5), speed=(8.0, 25.0), coupling=(0.02, 0.08)),
    "hard": dict(resonance=(0.3, 0.6), min_gap_hz=0.0, radius=(0.93, 0.95),
                 innovation=(1.4, 1.6), speed=(14.0, 16.0), coupling=(0.04, 0.05)),
}


@dataclass
class DriverProfile:
    driver_id: str
    ar_coeffs: tuple[float, float]
    innovation_std: float
    resonance_hz: float
    velocity_base: float
    velocity_coupling: float
    seed: int

    def __post_init__(self):
        p1, p2 = self.ar_coeffs
        if not (p2 > -1 and p1 + p2 < 1 and p2 - p1 < 1):
            raise ConfigurationError(f"AR(2) coefficients {self.ar_coeffs} are not stationary")
        if self.innovation_std <= 0:
            raise ConfigurationError("innovation_std must be positive")


@dataclass
class SynthConfig:
    n_drivers: int = 5
    minutes_per_driver: float = 275.0
    trips_per_driver: int | None = None
    trip_minutes: tuple[float, float] = (10.0, 40.0)
    jitter_ms: float = 10.0
    missing_rate: float = 0.002
    gps_outage_rate: float = 0.002
    preset: str = "separable"
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("missing_rate", "gps_outage_rate"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ConfigurationError(f"{name} must lie in [0, 1), got {v}")
        if self.preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if self.n_drivers < 1:
            raise ConfigurationError("n_drivers must be positive")
        lo, hi = self.trip_minutes
        if not 0 < lo <= hi:
            raise ConfigurationError(f"bad trip duration range {self.trip_minutes}")


def ar2_from_peak(peak_hz: float, radius: float, rate_hz: int = RATE_HZ) -> tuple[float, float]:
    """AR(2) coefficients with complex poles of modulus ``radius`` whose spectral density peaks at ``peak_hz``."""
    omega = 2 * math.pi * peak_hz / rate_hz
    # spectral peak of AR(2): cos w* = cos(theta) (1 + r^2) / (2 r)
    cos_theta = math.cos(omega) * 2 * radius / (1 + radius**2)
    return 2 * radius * cos_theta, -radius**2


def ar2_spectral_peak(phi1: float, phi2: float, rate_hz: int = RATE_HZ) -> float:
    if phi2 == 0:
        return 0.0 if phi1 >= 0 else rate_hz / 2
    c = phi1 * (phi2 - 1) / (4 * phi2)
    c = min(max(c, -1.0), 1.0)
    return math.acos(c) * rate_hz / (2 * math.pi)


def ar2_acf(phi1: float, phi2: float, h_max: int) -> np.ndarray:
    """Analytic autocorrelation of a stationary AR(2) via the Yule-Walker recursion."""
    rho = np.empty(h_max + 1)
    rho[0] = 1.0
    if h_max >= 1:
        rho[1] = phi1 / (1 - phi2)
    for h in range(2, h_max + 1):
        rho[h] = phi1 * rho[h - 1] + phi2 * rho[h - 2]
    return rho


def _spread(rng: np.random.Generator, n: int, lo: float, hi: float, gap: float) -> np.ndarray:
    slack = (hi - lo) - (n - 1) * gap
    if slack < 0:
        raise ConfigurationError(
            f"cannot place {n} drivers {gap} Hz apart inside [{lo}, {hi}] Hz")
    u = np.sort(rng.uniform(0.0, slack, size=n))
    return lo + u + gap * np.arange(n)


def sample_profiles(config: SynthConfig) -> list[DriverProfile]:
    preset = PRESETS[config.preset]
    ss = np.random.SeedSequence(config.seed)
    prof_seq, *driver_seqs = ss.spawn(config.n_drivers + 1)
    rng = np.random.default_rng(prof_seq)
    n = config.n_drivers
    peaks = _spread(rng, n, *preset["resonance"], preset["min_gap_hz"])
    peaks = rng.permutation(peaks)
    radii = rng.uniform(*preset["radius"], size=n)
    innov = rng.uniform(*preset["innovation"], size=n)
    speed = rng.uniform(*preset["speed"], size=n)
    coupling = rng.uniform(*preset["coupling"], size=n)
    profiles = []
    for i in range(n):
        phi = ar2_from_peak(peaks[i], radii[i])
        profiles.append(DriverProfile(
            driver_id=f"d{i:02d}", ar_coeffs=(float(phi[0]), float(phi[1])),
            innovation_std=float(innov[i]), resonance_hz=float(peaks[i]),
            velocity_base=float(speed[i]), velocity_coupling=float(coupling[i]),
            seed=int(driver_seqs[i].generate_state(1)[0])))
    return profiles


def clean_path(profile: DriverProfile, n: int, rng: np.random.Generator,
               burn_in: int = 500) -> tuple[np.ndarray, np.ndarray]:
    """Steering (deg) and velocity (m/s) on the nominal 10 Hz grid, no dirt."""
    p1, p2 = profile.ar_coeffs
    e = rng.normal(0.0, profile.innovation_std, size=n + burn_in)
    steering = lfilter([1.0], [1.0, -p1, -p2], e)[burn_in:]
    # exponential smoothing of |steering| with a ~5 s time constant
    alpha = 1.0 / (5 * RATE_HZ)
    env = lfilter([alpha], [1.0, alpha - 1.0], np.abs(steering),
                  zi=[(1 - alpha) * abs(steering[0])])[0]
    velocity = np.maximum(profile.velocity_base - profile.velocity_coupling * env, 0.0)
    return steering, velocity


def gen_trip(profile: DriverProfile, duration_s: float, rng: np.random.Generator,
             config: SynthConfig | None = None) -> list[RawSample]:
    """One raw trip: AR(2) steering at nominal 10 Hz plus timestamp jitter and injected dirt."""
    config = config or SynthConfig()
    n = int(round(duration_s * RATE_HZ))
    steering, velocity = clean_path(profile, n, rng)
    ts = STEP_MS * np.arange(n, dtype=np.float64)
    if config.jitter_ms > 0:
        # uniform on +-2J has mean absolute deviation J; capped to keep order
        half = min(2 * config.jitter_ms, 0.49 * STEP_MS)
        ts = ts + rng.uniform(-half, half, size=n)
    ts = np.maximum(np.round(ts), 0)
    miss_s = rng.random(n) < config.missing_rate
    miss_v = rng.random(n) < config.missing_rate
    gps_ok = np.ones(n, dtype=bool)
    if config.gps_outage_rate > 0:
        mean_len = 9.0
        starts = np.flatnonzero(rng.random(n) < config.gps_outage_rate / mean_len)
        lengths = rng.integers(3, 16, size=len(starts))
        for s, length in zip(starts, lengths):
            gps_ok[s:s + length] = False
    return [RawSample(float(ts[k]),
                      None if miss_s[k] else float(steering[k]),
                      None if miss_v[k] else float(velocity[k]),
                      bool(gps_ok[k]))
            for k in range(n)]


def trip_durations(config: SynthConfig, rng: np.random.Generator) -> list[float]:
    """Trip lengths in seconds for one driver."""
    lo, hi = config.trip_minutes
    if config.trips_per_driver is not None:
        return [60 * float(m) for m in rng.uniform(lo, hi, size=config.trips_per_driver)]
    target = config.minutes_per_driver
    out, total = [], 0.0
    while total < target - 1e-9:
        m = float(rng.uniform(lo, hi))
        rest = target - total
        if rest - m < 5.0:
            m = rest if rest >= 5.0 else 5.0
        out.append(60 * m)
        total += m
    return out


def gen_fleet(config: SynthConfig, out_dir: str | os.PathLike) -> list[DriverProfile]:
    """Write trip CSVs, ``manifest.csv`` and ``profiles.json`` under ``out_dir``."""
    out_dir = Path(out_dir)
    (out_dir / "trips").mkdir(parents=True, exist_ok=True)
    profiles = sample_profiles(config)
    entries = []
    for prof in profiles:
        rng = np.random.default_rng(prof.seed)
        for k, dur in enumerate(trip_durations(config, rng)):
            rel = f"trips/{prof.driver_id}_t{k:03d}.csv"
            write_raw_csv(gen_trip(prof, dur, rng, config), out_dir / rel)
            entries.append((prof.driver_id, rel))
    write_manifest(entries, out_dir / "manifest.csv")
    with open(out_dir / "profiles.json", "w", encoding="utf-8") as fh:
        json.dump({"config": asdict(config), "profiles": [asdict(p) for p in profiles]},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    return profiles


def load_profiles(path: str | os.PathLike) -> list[DriverProfile]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return [DriverProfile(**{**p, "ar_coeffs": tuple(p["ar_coeffs"])}) for p in doc["profiles"]]
