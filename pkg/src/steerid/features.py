"""Segmenting trips, log-FFT window features, segment matrices and batches."""
from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import BalanceError, ConfigurationError, TooShortError
from .ingest import RATE_HZ, UniformTrip

SEGMENT_S = 900
VOTE_EVERY = 6
BATCH_SIZE = 32


@dataclass
class Segment:
    """A fixed-length stretch of one driver's data, possibly spanning several trips.

    ``spans`` lists ``(trip_id, start, stop)`` sample ranges in order, so
    train/test disjointness can be checked against the source trips.
    """
    driver_id: str
    steering: np.ndarray
    velocity: np.ndarray
    spans: list[tuple[str, int, int]] = field(default_factory=list)
    index: int = 0

    def __len__(self) -> int:
        return len(self.steering)


@dataclass
class WindowFeature:
    lft: np.ndarray
    mean_velocity: float

    def as_vector(self) -> np.ndarray:
        return np.append(self.lft, self.mean_velocity)


@dataclass
class SegmentMatrix:
    driver_id: str
    features: np.ndarray  # (F, w + 1)

    @property
    def n_windows(self) -> int:
        return self.features.shape[0]

    @property
    def window(self) -> int:
        return self.features.shape[1] - 1

    @property
    def n_votes(self) -> int:
        return self.n_windows // VOTE_EVERY


@dataclass
class Batch:
    x: np.ndarray  # (32, F, w + 1)
    labels: np.ndarray  # class indices
    driver_ids: list[str]


def window_samples(window_s: float, rate_hz: int = RATE_HZ) -> int:
    w = window_s * rate_hz
    if abs(w - round(w)) > 1e-9:
        raise ConfigurationError(f"window {window_s} s is not a multiple of 1/{rate_hz} s")
    return int(round(w))


def segment_driver(driver_id: str, trips: Sequence[UniformTrip], segment_s: float = SEGMENT_S,
                   rate_hz: int = RATE_HZ) -> list[Segment]:
    """Cut a driver's trips into consecutive fixed-length segments.

    Trips are concatenated in the given order and the stream is cut every
    ``segment_s`` seconds; a long trip yields several segments, short
    trips share one. The final partial segment is dropped.
    """
    seg_len = int(round(segment_s * rate_hz))
    segments = []
    buf_s: list[np.ndarray] = []
    buf_v: list[np.ndarray] = []
    spans: list[tuple[str, int, int]] = []
    filled = 0
    for trip in trips:
        pos = 0
        n = len(trip)
        while pos < n:
            take = min(seg_len - filled, n - pos)
            buf_s.append(trip.steering[pos:pos + take])
            buf_v.append(trip.velocity[pos:pos + take])
            spans.append((trip.trip_id, pos, pos + take))
            filled += take
            pos += take
            if filled == seg_len:
                segments.append(Segment(driver_id, np.concatenate(buf_s), np.concatenate(buf_v),
                                        spans, index=len(segments)))
                buf_s, buf_v, spans, filled = [], [], [], 0
    return segments


def build_segments(trips: Mapping[str, Sequence[UniformTrip]], n_segments: int,
                   segment_s: float = SEGMENT_S) -> dict[str, list[Segment]]:
    """Exactly ``n_segments`` segments per driver, earliest first."""
    out = {}
    for driver_id, driver_trips in trips.items():
        segs = segment_driver(driver_id, driver_trips, segment_s)
        if len(segs) < n_segments:
            have = sum(len(t) for t in driver_trips) / RATE_HZ / 60
            raise BalanceError(driver_id, f"{have:.1f} min of data gives {len(segs)} segments, "
                                          f"need {n_segments}")
        out[driver_id] = segs[:n_segments]
    return out


def log_fft_window(window, velocity) -> WindowFeature:
    """log2(|DFT| + 1) of a steering window, plus the window's mean velocity."""
    window = np.asarray(window, dtype=np.float64)
    lft = np.log2(np.abs(np.fft.fft(window)) + 1.0)
    return WindowFeature(lft=lft, mean_velocity=float(np.mean(velocity)))


def window_matrix(steering, velocity, w: int) -> np.ndarray:
    """Feature rows for all complete non-overlapping windows (no truncation to votes)."""
    steering = np.asarray(steering, dtype=np.float64)
    velocity = np.asarray(velocity, dtype=np.float64)
    n_win = len(steering) // w
    s = steering[: n_win * w].reshape(n_win, w)
    v = velocity[: n_win * w].reshape(n_win, w)
    lft = np.log2(np.abs(np.fft.fft(s, axis=1)) + 1.0)
    return np.column_stack([lft, v.mean(axis=1)])


def build_segment_matrix(segment: Segment, w: int) -> SegmentMatrix:
    """Non-overlapping windows of ``w`` samples, count truncated to a multiple of six."""
    if w < 4:
        raise ConfigurationError(f"window must be at least 4 samples, got {w}")
    n_win = len(segment) // w
    if n_win < VOTE_EVERY:
        raise TooShortError(f"segment of {len(segment)} samples holds {n_win} windows of {w}, "
                            f"need {VOTE_EVERY}")
    F = VOTE_EVERY * (n_win // VOTE_EVERY)
    feats = window_matrix(segment.steering[: F * w], segment.velocity[: F * w], w)
    return SegmentMatrix(segment.driver_id, feats)


def assemble_batch(pool: Mapping[str, Sequence[SegmentMatrix]], rng: np.random.Generator,
                   classes: Sequence[str] | None = None, size: int = BATCH_SIZE) -> Batch:
    """Draw a driver uniformly, then one of its segment matrices uniformly, ``size`` times."""
    classes = list(classes) if classes is not None else sorted(pool)
    if not classes:
        raise ConfigurationError("empty segment pool")
    shapes = {m.features.shape for d in classes for m in pool[d]}
    if len(shapes) != 1:
        raise ConfigurationError(f"segment matrices differ in shape: {sorted(shapes)}")
    drivers = rng.integers(len(classes), size=size)
    mats = []
    for c in drivers:
        mats.append(pool[classes[c]][rng.integers(len(pool[classes[c]]))].features)
    return Batch(x=np.stack(mats), labels=drivers.astype(np.int64),
                 driver_ids=[classes[c] for c in drivers])


def votes_for(segment_s: float, window_s: float) -> tuple[int, int]:
    """(F, M) for a segment length and window length in seconds."""
    n_win = window_samples(segment_s) // window_samples(window_s)
    F = VOTE_EVERY * (n_win // VOTE_EVERY)
    return F, F // VOTE_EVERY


# Feature cache: header <magic, version, F, w>, then per record
# <driver_id length, driver_id utf-8, F, w, F*(w+1) float32 row-major>.
CACHE_MAGIC = b"SIDF"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sHII")
_REC = struct.Struct("<II")


def write_feature_cache(matrices: Sequence[SegmentMatrix], path: str | os.PathLike) -> None:
    if not matrices:
        raise ConfigurationError("nothing to cache")
    F, d = matrices[0].features.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, F, d - 1))
        for m in matrices:
            if m.features.shape != (F, d):
                raise ConfigurationError("segment matrices differ in shape")
            name = m.driver_id.encode("utf-8")
            fh.write(struct.pack("<H", len(name)) + name)
            fh.write(_REC.pack(F, d - 1))
            fh.write(np.ascontiguousarray(m.features, dtype="<f4").tobytes())


def read_feature_cache(path: str | os.PathLike) -> list[SegmentMatrix]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise ConfigurationError("feature cache truncated")
    magic, version, F, w = _HEADER.unpack_from(blob, 0)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        raise ConfigurationError(f"not a version-{CACHE_VERSION} feature cache")
    pos = _HEADER.size
    out = []
    nbytes = F * (w + 1) * 4
    while pos < len(blob):
        try:
            (name_len,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + name_len].decode("utf-8")
            pos += name_len
            rF, rw = _REC.unpack_from(blob, pos)
            pos += _REC.size
        except struct.error:
            raise ConfigurationError("feature cache truncated") from None
        if (rF, rw) != (F, w) or pos + nbytes > len(blob):
            raise ConfigurationError("feature cache record malformed or truncated")
        mat = np.frombuffer(blob, dtype="<f4", count=F * (w + 1), offset=pos).reshape(F, w + 1)
        pos += nbytes
        out.append(SegmentMatrix(name, mat.astype(np.float64)))
    return out


def segments_duration_min(n_segments: int, segment_s: float = SEGMENT_S) -> float:
    return n_segments * segment_s / 60


def segments_needed(minutes: float, segment_s: float = SEGMENT_S) -> int:
    return int(math.ceil(minutes * 60 / segment_s - 1e-9))
