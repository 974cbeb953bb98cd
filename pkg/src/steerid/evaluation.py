"""Train/test protocol, vote accumulation, accuracy curves, confusion matrices."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import BalanceError, ConfigurationError
from .features import SEGMENT_S, Segment, SegmentMatrix, build_segment_matrix, segment_driver, segments_needed
from .ingest import RATE_HZ, UniformTrip

TRAIN_MIN = 240
TEST_MIN = 30


@dataclass
class SplitPlan:
    train: dict[str, list[Segment]]
    test: dict[str, list[Segment]]
    segment_s: float = SEGMENT_S

    @property
    def drivers(self) -> list[str]:
        return sorted(self.train)

    def train_minutes(self, driver_id: str) -> float:
        return len(self.train[driver_id]) * self.segment_s / 60

    def test_minutes(self, driver_id: str) -> float:
        return len(self.test[driver_id]) * self.segment_s / 60

    def to_dict(self) -> dict:
        def spans(segs):
            return [{"index": s.index, "spans": [list(sp) for sp in s.spans]} for s in segs]
        return {
            "segment_s": self.segment_s,
            "drivers": {d: {"train": spans(self.train[d]), "test": spans(self.test[d])}
                        for d in self.drivers},
        }


def make_split(fleet: Mapping[str, Sequence[UniformTrip]], seed: int, train_min: float = TRAIN_MIN,
               test_min: float = TEST_MIN, segment_s: float = SEGMENT_S) -> SplitPlan:
    """Chronological, balanced split into training and test segments.

    Each driver's trips are cut into segments in manifest order. The test
    pool is the last ``ceil(test_min / segment)`` segments; everything
    earlier is training data. Drivers richer than the poorest one are
    randomly downsampled (seeded) to the common training count.
    """
    n_test = segments_needed(test_min, segment_s)
    n_train_min = segments_needed(train_min, segment_s)
    per_driver = {}
    for d in sorted(fleet):
        segs = segment_driver(d, fleet[d], segment_s)
        if len(segs) < n_train_min + n_test:
            have = sum(len(t) for t in fleet[d]) / RATE_HZ / 60
            raise BalanceError(d, f"{have:.1f} min of usable data; need {train_min} min train + "
                                  f"{test_min} min test in {segment_s / 60:g} min segments")
        per_driver[d] = segs
    if not per_driver:
        raise ConfigurationError("empty fleet")
    n_train = min(len(s) for s in per_driver.values()) - n_test
    rng = np.random.default_rng(seed)
    train, test = {}, {}
    for d, segs in per_driver.items():
        earlier = segs[: len(segs) - n_test]
        keep = np.sort(rng.choice(len(earlier), size=n_train, replace=False))
        train[d] = [earlier[i] for i in keep]
        test[d] = segs[len(segs) - n_test:]
    return SplitPlan(train=train, test=test, segment_s=segment_s)


def _intervals(segs: Sequence[Segment]):
    out = {}
    for s in segs:
        for trip_id, a, b in s.spans:
            out.setdefault(trip_id, []).append((a, b))
    return out


def check_disjoint(plan: SplitPlan) -> bool:
    """True when no trip sample lies in both the train and the test pool of a driver."""
    for d in plan.drivers:
        tr = _intervals(plan.train[d])
        te = _intervals(plan.test[d])
        for trip_id, spans in te.items():
            for a, b in spans:
                for c, e in tr.get(trip_id, ()):
                    if a < e and c < b:
                        return False
    return True


def plan_matrices(plan: SplitPlan, w: int):
    train = {d: [build_segment_matrix(s, w) for s in segs] for d, segs in plan.train.items()}
    test = {d: [build_segment_matrix(s, w) for s in segs] for d, segs in plan.test.items()}
    return train, test


def cumulative_decision(votes) -> int:
    """Class with the largest summed vote; ties go to the lowest index (0-based)."""
    votes = np.atleast_2d(np.asarray(votes, dtype=np.float64))
    if len(votes) == 0:
        raise ValueError("need at least one vote")
    return int(np.argmax(votes.sum(axis=0)))


def cumulative_decisions(votes: np.ndarray) -> np.ndarray:
    """Decisions after 1..M votes for a stack of segments: (N, M, C) -> (N, M)."""
    return np.argmax(np.cumsum(votes, axis=1), axis=2)


@dataclass
class AccuracyCurve:
    accuracy: np.ndarray  # entry k-1 is the accuracy after k votes
    n_classes: int
    n_segments: int

    @property
    def final(self) -> float:
        return float(self.accuracy[-1])

    @property
    def mean_over_votes(self) -> float:
        return float(self.accuracy.mean())

    def to_dict(self) -> dict:
        return {"n_classes": self.n_classes, "n_segments": self.n_segments,
                "final_vote_accuracy": self.final,
                "mean_accuracy_over_votes": self.mean_over_votes,
                "curve": [{"k": k + 1, "acc": float(a)} for k, a in enumerate(self.accuracy)]}


def accuracy_curve(votes: np.ndarray, labels: np.ndarray) -> AccuracyCurve:
    votes = np.asarray(votes)
    dec = cumulative_decisions(votes)
    acc = (dec == np.asarray(labels)[:, None]).mean(axis=0)
    return AccuracyCurve(accuracy=acc, n_classes=votes.shape[2], n_segments=len(votes))


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    classes: list[str]

    @property
    def normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())

    def to_dict(self) -> dict:
        return {"classes": self.classes, "counts": self.counts.tolist(),
                "normalized": self.normalized.tolist()}


def confusion_from_votes(votes: np.ndarray, labels: np.ndarray, classes: Sequence[str]) -> ConfusionMatrix:
    pred = cumulative_decisions(votes)[:, -1]
    n = len(classes)
    counts = np.zeros((n, n), dtype=np.int64)
    np.add.at(counts, (np.asarray(labels), pred), 1)
    return ConfusionMatrix(counts=counts, classes=list(classes))


def _test_votes(model, test_pool: Mapping[str, Sequence[SegmentMatrix]]):
    from .gru import predict_votes
    from .train import flatten_pool
    mats, labels = flatten_pool(test_pool, model.classes)
    if not mats:
        raise ConfigurationError("empty test pool")
    return predict_votes(model, mats), labels


def accuracy_over_time(model, test_pool: Mapping[str, Sequence[SegmentMatrix]]) -> AccuracyCurve:
    votes, labels = _test_votes(model, test_pool)
    return accuracy_curve(votes, labels)


def confusion(model, test_pool: Mapping[str, Sequence[SegmentMatrix]]) -> ConfusionMatrix:
    votes, labels = _test_votes(model, test_pool)
    return confusion_from_votes(votes, labels, model.classes)
