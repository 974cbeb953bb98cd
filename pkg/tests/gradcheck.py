"""Central finite-difference check shared by the GRU tests and the acceptance suite."""
import numpy as np

from steerid.gru import batch_loss, fit_standardization, init_params, loss_and_grads
from steerid.features import SegmentMatrix


def small_problem(seed, candidate, hidden=8, F=12, D=6, B=3, n_classes=2):
    rng = np.random.default_rng(seed)
    params = init_params(rng, n_classes, D, hidden=hidden, candidate=candidate, dtype=np.float64,
                         keep_prob=0.8, l2_lambda=1e-3)
    X = rng.normal(size=(B, F, D))
    fit_standardization(params, [SegmentMatrix("x", x) for x in X])
    labels = rng.integers(n_classes, size=B)
    return params, X, labels


def max_relative_error(params, X, labels, eps=1e-5, drop_seed=7):
    """Largest |analytic - numeric| / max(|analytic|, |numeric|, 1e-6) over every parameter.

    Dropout is active; each evaluation redraws the same masks from ``drop_seed``.
    The step is near the cube root of float64 epsilon, where truncation and
    roundoff error balance for central differences.
    """
    _, grads = loss_and_grads(params, X, labels, train=True, rng=np.random.default_rng(drop_seed))
    worst = 0.0
    for w, g in zip(params.weights(), grads):
        flat = w.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = batch_loss(params, X, labels, train=True, rng=np.random.default_rng(drop_seed))
            flat[i] = old - eps
            down = batch_loss(params, X, labels, train=True, rng=np.random.default_rng(drop_seed))
            flat[i] = old
            num = (up - down) / (2 * eps)
            err = abs(gflat[i] - num) / max(abs(gflat[i]), abs(num), 1e-6)
            worst = max(worst, err)
    return worst
