"""Training loop: seeded batches, RMSProp, early stopping on held-out accuracy."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import gru
from .features import BATCH_SIZE, SegmentMatrix, assemble_batch

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    hidden: int = gru.HIDDEN
    candidate: str = "sigmoid"
    lr: float = gru.LEARNING_RATE
    keep_prob: float = gru.KEEP_PROB
    l2_lambda: float = gru.L2_LAMBDA
    steps: int = 2000
    batch_size: int = BATCH_SIZE
    eval_every: int = 25
    patience: int = 20
    dtype: str = "float32"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    params: gru.ModelParams
    state: gru.OptimizerState
    history: list[dict] = field(default_factory=list)
    best_step: int = 0
    stopped_early: bool = False


def final_vote_accuracy(params: gru.ModelParams, pool: Mapping[str, Sequence[SegmentMatrix]],
                        classes: Sequence[str]) -> float:
    mats, labels = flatten_pool(pool, classes)
    if not mats:
        return float("nan")
    votes = gru.predict_votes(params, mats)
    pred = np.argmax(votes.sum(axis=1), axis=1)
    return float(np.mean(pred == labels))


def flatten_pool(pool: Mapping[str, Sequence[SegmentMatrix]], classes: Sequence[str]):
    mats, labels = [], []
    for k, d in enumerate(classes):
        for m in pool.get(d, []):
            mats.append(m)
            labels.append(k)
    return mats, np.array(labels, dtype=np.int64)


def train_model(train_pool: Mapping[str, Sequence[SegmentMatrix]], config: TrainConfig, seed: int,
                val_pool: Mapping[str, Sequence[SegmentMatrix]] | None = None,
                classes: Sequence[str] | None = None) -> TrainResult:
    """Fit a fresh model on ``train_pool``; deterministic for a given seed.

    With a validation pool the best-scoring parameters are kept and training
    stops after ``patience`` evaluations without improvement.
    """
    classes = list(classes) if classes is not None else sorted(train_pool)
    init_seq, batch_seq, drop_seq = np.random.SeedSequence(seed).spawn(3)
    mats = [m for d in classes for m in train_pool[d]]
    params = gru.init_params(np.random.default_rng(init_seq), len(classes), mats[0].features.shape[1],
                             hidden=config.hidden, candidate=config.candidate,
                             dtype=np.dtype(config.dtype), classes=classes,
                             keep_prob=config.keep_prob, l2_lambda=config.l2_lambda, lr=config.lr)
    gru.fit_standardization(params, mats)
    state = gru.OptimizerState.fresh(params)
    batch_rng = np.random.default_rng(batch_seq)
    drop_rng = np.random.default_rng(drop_seq)

    result = TrainResult(params=params, state=state)
    best_acc, best_params, stale = -math.inf, None, 0
    running = []
    for step in range(1, config.steps + 1):
        batch = assemble_batch(train_pool, batch_rng, classes=classes, size=config.batch_size)
        loss, grads = gru.backward(batch, params, drop_rng, step=step)
        gru.rmsprop_step(state, params, grads)
        running.append(loss)
        if step % config.eval_every == 0 or step == config.steps:
            entry = {"step": step, "loss": float(np.mean(running))}
            running = []
            if val_pool:
                acc = final_vote_accuracy(params, val_pool, classes)
                entry["val_accuracy"] = acc
                if acc > best_acc:
                    best_acc, best_params, stale = acc, params.copy(), 0
                    result.best_step = step
                else:
                    stale += 1
            result.history.append(entry)
            log.info("step %d loss %.4f%s", step, entry["loss"],
                     f" val {entry['val_accuracy']:.3f}" if "val_accuracy" in entry else "")
            if val_pool and stale >= config.patience:
                result.stopped_early = True
                break
    if best_params is not None:
        result.params = best_params
    else:
        result.best_step = state.step
    return result
