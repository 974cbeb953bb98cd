import numpy as np

from steerid.features import SegmentMatrix
from steerid.gru import batch_loss
from steerid.train import TrainConfig, final_vote_accuracy, train_model


def toy_pool(seed=0, n=8, F=12, D=5):
    rng = np.random.default_rng(seed)
    return {d: [SegmentMatrix(d, rng.normal(size=(F, D)) + 2.0 * k) for _ in range(n)]
            for k, d in enumerate(["a", "b"])}


def test_training_fits_separable_toy():
    pool = toy_pool()
    cfg = TrainConfig(hidden=6, lr=1e-2, steps=60, batch_size=8, eval_every=20, keep_prob=1.0)
    res = train_model(pool, cfg, seed=1)
    assert final_vote_accuracy(res.params, toy_pool(5), ["a", "b"]) == 1.0
    assert res.history[-1]["loss"] < res.history[0]["loss"]


def test_training_is_seed_deterministic():
    cfg = TrainConfig(hidden=4, lr=1e-2, steps=10, batch_size=4, eval_every=5)
    a = train_model(toy_pool(), cfg, seed=3)
    b = train_model(toy_pool(), cfg, seed=3)
    for x, y in zip(a.params.weights(), b.params.weights()):
        np.testing.assert_array_equal(x, y)
    assert a.history == b.history


def test_early_stopping_keeps_best():
    cfg = TrainConfig(hidden=4, lr=1e-2, steps=200, batch_size=4, eval_every=5, patience=2)
    res = train_model(toy_pool(), cfg, seed=0, val_pool=toy_pool(9, n=2))
    assert res.stopped_early
    assert res.best_step <= res.history[-1]["step"]
    best = max(h["val_accuracy"] for h in res.history)
    assert final_vote_accuracy(res.params, toy_pool(9, n=2), ["a", "b"]) == best


def test_standardization_frozen_from_training():
    pool = toy_pool()
    res = train_model(pool, TrainConfig(hidden=3, steps=1, batch_size=2), seed=0)
    rows = np.concatenate([m.features for ms in pool.values() for m in ms])
    np.testing.assert_allclose(res.params.feat_mean, rows.mean(axis=0), rtol=1e-5)
    X = np.stack([m.features for m in pool["a"][:2]])
    assert np.isfinite(batch_loss(res.params, X, [0, 0]))
