"""End-to-end runs: protocol training, the window-size sweep, and the forest baseline."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .evaluation import (TEST_MIN, TRAIN_MIN, AccuracyCurve, ConfusionMatrix, SplitPlan, accuracy_curve,
                         confusion_from_votes, make_split, plan_matrices)
from .features import SEGMENT_S, window_samples
from .forest import Forest, classify_segment, fit_forest, segment_summaries
from .gru import predict_votes
from .ingest import UniformTrip
from .train import TrainConfig, TrainResult, flatten_pool, train_model

log = logging.getLogger(__name__)


@dataclass
class Protocol:
    train_min: float = TRAIN_MIN
    test_min: float = TEST_MIN
    segment_s: float = SEGMENT_S
    val_segments: int = 0


@dataclass
class RunResult:
    plan: SplitPlan
    train: TrainResult
    curve: AccuracyCurve
    confusion: ConfusionMatrix
    window_s: float


def select_drivers(fleet: Mapping[str, Sequence[UniformTrip]], n_drivers: int | None,
                   rng: np.random.Generator) -> dict[str, list[UniformTrip]]:
    drivers = sorted(fleet)
    if n_drivers is not None and n_drivers < len(drivers):
        drivers = sorted(rng.choice(drivers, size=n_drivers, replace=False).tolist())
    return {d: list(fleet[d]) for d in drivers}


def _carve_validation(train_mats, n_val: int):
    if n_val <= 0:
        return train_mats, None
    # last (most recent) training segments of each driver become the validation pool
    return ({d: m[:-n_val] for d, m in train_mats.items()},
            {d: m[-n_val:] for d, m in train_mats.items()})


def run_protocol(fleet: Mapping[str, Sequence[UniformTrip]], window_s: float, config: TrainConfig,
                 seed: int, protocol: Protocol | None = None, plan: SplitPlan | None = None) -> RunResult:
    """Split, featurize, train and evaluate on the held-out test segments."""
    protocol = protocol or Protocol()
    split_seq, train_seq = np.random.SeedSequence(seed).spawn(2)
    if plan is None:
        plan = make_split(fleet, int(split_seq.generate_state(1)[0]), protocol.train_min,
                          protocol.test_min, protocol.segment_s)
    w = window_samples(window_s)
    train_mats, test_mats = plan_matrices(plan, w)
    fit_mats, val_mats = _carve_validation(train_mats, protocol.val_segments)
    result = train_model(fit_mats, config, int(train_seq.generate_state(1)[0]), val_pool=val_mats,
                         classes=plan.drivers)
    mats, labels = flatten_pool(test_mats, plan.drivers)
    votes = predict_votes(result.params, mats)
    return RunResult(plan=plan, train=result, curve=accuracy_curve(votes, labels),
                     confusion=confusion_from_votes(votes, labels, plan.drivers), window_s=window_s)


def evaluate_model(params, fleet, seed: int, protocol: Protocol, window_s: float):
    """Rebuild the split used at training time and score ``params`` on its test pool."""
    split_seq, _ = np.random.SeedSequence(seed).spawn(2)
    sub = {d: fleet[d] for d in params.classes if d in fleet}
    missing = sorted(set(params.classes) - set(sub))
    if missing:
        from .errors import ConfigurationError
        raise ConfigurationError(f"model classes missing from data: {missing}")
    plan = make_split(sub, int(split_seq.generate_state(1)[0]), protocol.train_min,
                      protocol.test_min, protocol.segment_s)
    _, test_mats = plan_matrices(plan, window_samples(window_s))
    mats, labels = flatten_pool(test_mats, params.classes)
    votes = predict_votes(params, mats)
    return plan, accuracy_curve(votes, labels), confusion_from_votes(votes, labels, params.classes)


# ---------------------------------------------------------------- sweep

@dataclass
class SweepRow:
    window_s: float
    mean_acc: float
    std_acc: float
    accuracies: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"window_s": self.window_s, "mean_acc": self.mean_acc, "std_acc": self.std_acc,
                "accuracies": self.accuracies}


def _sweep_cell(args):
    fleet, window_s, config, cell_seed, protocol, plan = args
    res = run_protocol(fleet, window_s, config, cell_seed, protocol, plan=plan)
    return res.curve.final


def default_windows() -> list[float]:
    return [2.5 + 0.5 * k for k in range(16)]


def window_sweep(fleet: Mapping[str, Sequence[UniformTrip]], windows: Sequence[float], repetitions: int,
                 config: TrainConfig, seed: int, n_drivers: int | None = None,
                 protocol: Protocol | None = None, jobs: int = 1) -> list[SweepRow]:
    """Retrain for every (window, repetition) cell and tabulate final-vote accuracy.

    Repetition ``r`` draws one driver subset and one split, shared by every
    window so that only the window length varies along a row.
    """
    protocol = protocol or Protocol()
    for w in windows:
        window_samples(w)
    rep_seqs = np.random.SeedSequence(seed).spawn(repetitions)
    cells = []
    for r, seq in enumerate(rep_seqs):
        pick_seq, split_seq, cell_seq = seq.spawn(3)
        sub = select_drivers(fleet, n_drivers, np.random.default_rng(pick_seq))
        plan = make_split(sub, int(split_seq.generate_state(1)[0]), protocol.train_min,
                          protocol.test_min, protocol.segment_s)
        cell_seed = int(cell_seq.generate_state(1)[0])
        for w in windows:
            cells.append((sub, w, config, cell_seed, protocol, plan))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            accs = list(pool.map(_sweep_cell, cells))
    else:
        accs = []
        for i, cell in enumerate(cells):
            accs.append(_sweep_cell(cell))
            log.info("sweep cell %d/%d window %.1f s acc %.3f", i + 1, len(cells), cell[1], accs[-1])
    rows = []
    for i, w in enumerate(windows):
        a = np.array(accs[i::len(windows)])
        rows.append(SweepRow(window_s=float(w), mean_acc=float(a.mean()), std_acc=float(a.std()),
                             accuracies=[float(x) for x in a]))
    return rows


def sweep_argmax(rows: Sequence[SweepRow]) -> float:
    """Window with the highest mean accuracy; ties go to the shorter window."""
    best = max(r.mean_acc for r in rows)
    return min(r.window_s for r in rows if r.mean_acc == best)


# ---------------------------------------------------------------- baseline

@dataclass
class BaselineResult:
    forest: Forest
    accuracy: float
    confusion: ConfusionMatrix


def run_baseline(plan: SplitPlan, window_s: float, seed: int, n_trees: int = 100,
                 max_depth: int = 12) -> BaselineResult:
    w = window_samples(window_s)
    classes = plan.drivers
    X, y = [], []
    for k, d in enumerate(classes):
        for m in segment_summaries(plan.train[d], w):
            X.append(m)
            y.append(np.full(len(m), k))
    forest = fit_forest(np.concatenate(X), np.concatenate(y), np.random.default_rng(seed),
                        n_classes=len(classes), n_trees=n_trees, max_depth=max_depth)
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for k, d in enumerate(classes):
        for m in segment_summaries(plan.test[d], w):
            counts[k, classify_segment(forest, m)] += 1
    cm = ConfusionMatrix(counts=counts, classes=classes)
    return BaselineResult(forest=forest, accuracy=cm.accuracy, confusion=cm)
