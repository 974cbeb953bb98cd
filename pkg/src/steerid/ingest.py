"""Trip ingestion: parse, clean, resample to 10 Hz, enforce minimum length."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, InsufficientDataError, RowError

TRIP_HEADER = ("timestamp_ms", "steering_deg", "speed_mps", "gps_valid")
MANIFEST_HEADER = ("driver_id", "trip_file")

RATE_HZ = 10
STEP_MS = 100
MIN_TRIP_SAMPLES = 3000  # 5 min at 10 Hz
MAX_GAP_MS = 2000


@dataclass(frozen=True)
class RawSample:
    timestamp: float
    steering: float | None
    velocity: float | None
    gps_valid: bool


@dataclass
class UniformTrip:
    trip_id: str
    driver_id: str
    steering: np.ndarray
    velocity: np.ndarray
    start_ms: int = 0
    rate_hz: int = RATE_HZ

    def __post_init__(self):
        self.steering = np.asarray(self.steering, dtype=np.float64)
        self.velocity = np.asarray(self.velocity, dtype=np.float64)
        if self.steering.shape != self.velocity.shape:
            raise ValueError("steering and velocity lengths differ")

    def __len__(self) -> int:
        return len(self.steering)

    @property
    def duration_s(self) -> float:
        return len(self) / self.rate_hz

    @property
    def timestamps_ms(self) -> np.ndarray:
        return self.start_ms + STEP_MS * np.arange(len(self), dtype=np.int64)


def _parse_float(cell: str) -> float | None:
    cell = cell.strip()
    if cell == "":
        return None
    value = float(cell)
    if math.isnan(value):
        return None
    return value


def parse_trip_csv(path: str | os.PathLike) -> list[RawSample]:
    """Read a trip CSV into raw samples, one per data row.

    Blank numeric cells (and literal NaN) become ``None``. A blank or
    unparseable timestamp raises :class:`RowError` with the 1-based line
    number in the file.
    """
    samples = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRIP_HEADER:
            raise FormatError(f"{path}: expected header {','.join(TRIP_HEADER)}, got {header}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(TRIP_HEADER):
                raise RowError(line, f"expected {len(TRIP_HEADER)} fields, got {len(row)}")
            try:
                ts = float(row[0])
            except ValueError:
                raise RowError(line, f"unparseable timestamp {row[0]!r}") from None
            if not math.isfinite(ts):
                raise RowError(line, f"non-finite timestamp {row[0]!r}")
            try:
                steering = _parse_float(row[1])
                velocity = _parse_float(row[2])
            except ValueError as exc:
                raise RowError(line, str(exc)) from None
            flag = row[3].strip()
            if flag not in ("0", "1"):
                raise RowError(line, f"gps_valid must be 0 or 1, got {flag!r}")
            samples.append(RawSample(ts, steering, velocity, flag == "1"))
    return samples


def clean_samples(raw: Iterable[RawSample]) -> list[RawSample]:
    """Drop rows with missing values, GPS outage, or non-increasing timestamps."""
    kept = []
    last_ts = -math.inf
    for s in raw:
        if s.steering is None or s.velocity is None or not s.gps_valid:
            continue
        if not (math.isfinite(s.steering) and math.isfinite(s.velocity)):
            continue
        if s.timestamp <= last_ts:
            continue
        kept.append(s)
        last_ts = s.timestamp
    return kept


def split_on_gaps(clean: Sequence[RawSample], max_gap_ms: float = MAX_GAP_MS) -> list[list[RawSample]]:
    """Break a cleaned recording wherever consecutive timestamps differ by more than ``max_gap_ms``."""
    pieces: list[list[RawSample]] = []
    current: list[RawSample] = []
    for s in clean:
        if current and s.timestamp - current[-1].timestamp > max_gap_ms:
            pieces.append(current)
            current = []
        current.append(s)
    if current:
        pieces.append(current)
    return pieces


def _lagrange3(t: np.ndarray, nodes: np.ndarray, values: np.ndarray) -> np.ndarray:
    # nodes, values: (3, m) columns per evaluation point
    t0, t1, t2 = nodes
    y0, y1, y2 = values
    l0 = (t - t1) * (t - t2) / ((t0 - t1) * (t0 - t2))
    l1 = (t - t0) * (t - t2) / ((t1 - t0) * (t1 - t2))
    l2 = (t - t0) * (t - t1) / ((t2 - t0) * (t2 - t1))
    return y0 * l0 + y1 * l1 + y2 * l2


def quadratic_interpolate(times: np.ndarray, values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Piecewise quadratic interpolation through consecutive sample triples.

    A grid point in the interior interval ``[t_i, t_{i+1}]`` takes the mean
    of the two parabolas through ``(i-1, i, i+1)`` and ``(i, i+1, i+2)``,
    which straddle the interval symmetrically. The first and last intervals
    only have one triple available and use it alone. Exact on polynomials
    of degree two or less, and exact at the nodes.
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    n = len(times)
    if n < 3:
        raise InsufficientDataError(f"need at least 3 samples, got {n}")
    if grid.size and (grid[0] < times[0] or grid[-1] > times[-1]):
        raise ValueError("grid extends beyond the recorded span")

    interval = np.clip(np.searchsorted(times, grid, side="right") - 1, 0, n - 2)
    left_start = np.clip(interval - 1, 0, n - 3)
    right_start = np.clip(interval, 0, n - 3)

    def through(start):
        idx = start[None, :] + np.arange(3)[:, None]
        return _lagrange3(grid, times[idx], values[idx])

    left = through(left_start)
    right = through(right_start)
    return np.where(left_start == right_start, left, 0.5 * (left + right))


def resample_uniform(clean: Sequence[RawSample], rate_hz: int = RATE_HZ,
                     trip_id: str = "", driver_id: str = "") -> UniformTrip:
    """Evaluate steering and velocity on the absolute 100 ms grid inside the recorded span."""
    if rate_hz != RATE_HZ:
        raise ValueError(f"only {RATE_HZ} Hz resampling is supported")
    if len(clean) < 3:
        raise InsufficientDataError(f"need at least 3 cleaned samples, got {len(clean)}")
    times = np.array([s.timestamp for s in clean], dtype=np.float64)
    if np.any(np.diff(times) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    first = int(math.ceil(times[0] / STEP_MS))
    last = int(math.floor(times[-1] / STEP_MS))
    grid = STEP_MS * np.arange(first, last + 1, dtype=np.float64)
    steering = quadratic_interpolate(times, [s.steering for s in clean], grid)
    velocity = quadratic_interpolate(times, [s.velocity for s in clean], grid)
    return UniformTrip(trip_id=trip_id, driver_id=driver_id, steering=steering,
                       velocity=velocity, start_ms=first * STEP_MS)


def enforce_min_length(trip: UniformTrip, min_samples: int = MIN_TRIP_SAMPLES) -> UniformTrip | None:
    """Return the trip if it is at least five minutes long, else ``None`` (dismissed)."""
    return trip if len(trip) >= min_samples else None


@dataclass
class IngestStats:
    rows: int = 0
    kept_rows: int = 0
    pieces: int = 0
    trips: int = 0
    dismissed: int = 0


def ingest_samples(raw: Sequence[RawSample], trip_id: str, driver_id: str,
                   stats: IngestStats | None = None) -> list[UniformTrip]:
    """Full per-recording pipeline; a recording may yield several trips after gap splitting."""
    stats = stats if stats is not None else IngestStats()
    clean = clean_samples(raw)
    stats.rows += len(raw)
    stats.kept_rows += len(clean)
    trips = []
    pieces = split_on_gaps(clean)
    stats.pieces += len(pieces)
    for k, piece in enumerate(pieces):
        piece_id = trip_id if len(pieces) == 1 else f"{trip_id}#{k}"
        if len(piece) < 3:
            stats.dismissed += 1
            continue
        trip = enforce_min_length(resample_uniform(piece, trip_id=piece_id, driver_id=driver_id))
        if trip is None:
            stats.dismissed += 1
            continue
        trips.append(trip)
    stats.trips += len(trips)
    return trips


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trip_csv(trip: UniformTrip, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIP_HEADER)
        for t, s, v in zip(trip.timestamps_ms, trip.steering, trip.velocity):
            w.writerow((int(t), _fmt(s), _fmt(v), 1))


def write_raw_csv(samples: Iterable[RawSample], path: str | os.PathLike) -> None:
    def cell(x):
        return "" if x is None else _fmt(x)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIP_HEADER)
        for s in samples:
            ts = int(s.timestamp) if float(s.timestamp).is_integer() else _fmt(s.timestamp)
            w.writerow((ts, cell(s.steering), cell(s.velocity), int(s.gps_valid)))


def read_manifest(path: str | os.PathLike) -> list[tuple[str, str]]:
    """Return ``(driver_id, trip_file)`` pairs; trip paths are resolved relative to the manifest."""
    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise FormatError(f"{path}: expected header {','.join(MANIFEST_HEADER)}")
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise RowError(reader.line_num, "expected driver_id,trip_file")
            driver_id, trip_file = (c.strip() for c in row)
            rows.append((driver_id, str(path.parent / trip_file)))
    return rows


def write_manifest(entries: Iterable[tuple[str, str]], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for driver_id, trip_file in entries:
            w.writerow((driver_id, trip_file))


def load_fleet(data_dir: str | os.PathLike, stats: IngestStats | None = None) -> dict[str, list[UniformTrip]]:
    """Ingest every trip listed in ``<data_dir>/manifest.csv``.

    Trips keep manifest order within each driver, which is taken as
    chronological order downstream.
    """
    data_dir = Path(data_dir)
    manifest = data_dir / "manifest.csv"
    if not manifest.exists():
        raise FormatError(f"{manifest} not found")
    fleet: dict[str, list[UniformTrip]] = {}
    for driver_id, trip_file in read_manifest(manifest):
        raw = parse_trip_csv(trip_file)
        trip_id = Path(trip_file).stem
        fleet.setdefault(driver_id, []).extend(ingest_samples(raw, trip_id, driver_id, stats))
    return fleet
