"""Two-layer bidirectional GRU encoder with a softmax vote head, written in numpy.

Gate weights of one cell are stacked row-wise as ``[update; reset; candidate]``
so a single matmul produces all three pre-activations. There are no bias
terms in the cells; the vote head is affine.
"""
from __future__ import annotations

import io
import json
import math
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .errors import CheckpointError, ConfigurationError, DivergenceError, LabelError, WiringError
from .features import VOTE_EVERY, Batch, SegmentMatrix

HIDDEN = 512
KEEP_PROB = 0.7
L2_LAMBDA = 1e-3
LEARNING_RATE = 1e-4
RMS_DECAY = 0.9
RMS_EPS = 1e-10
CELL_NAMES = ("l1_fwd", "l1_bwd", "l2_fwd", "l2_bwd")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


_ACTIVATIONS = {
    # activation, derivative expressed through the activation's output
    "sigmoid": (sigmoid, lambda y: y * (1.0 - y)),
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
}


@dataclass
class GruCellParams:
    W: np.ndarray  # (3H, input)
    U: np.ndarray  # (3H, H)

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    def _block(self, M, k):
        H = self.hidden
        return M[k * H:(k + 1) * H]

    W_z = property(lambda self: self._block(self.W, 0))
    W_r = property(lambda self: self._block(self.W, 1))
    W_h = property(lambda self: self._block(self.W, 2))
    U_z = property(lambda self: self._block(self.U, 0))
    U_r = property(lambda self: self._block(self.U, 1))
    U_h = property(lambda self: self._block(self.U, 2))


@dataclass
class ModelParams:
    cells: list[GruCellParams]
    V: np.ndarray  # (n_classes, 2H)
    c: np.ndarray  # (n_classes,)
    feat_mean: np.ndarray | None = None
    feat_scale: np.ndarray | None = None
    candidate: str = "sigmoid"
    keep_prob: float = KEEP_PROB
    l2_lambda: float = L2_LAMBDA
    lr: float = LEARNING_RATE
    classes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigurationError("need at least two classes")
        if not 0 < self.keep_prob <= 1:
            raise ConfigurationError(f"keep_prob must lie in (0, 1], got {self.keep_prob}")
        if self.candidate not in _ACTIVATIONS:
            raise ConfigurationError(f"unknown candidate activation {self.candidate!r}")
        if len(self.cells) != 4:
            raise WiringError("expected four GRU cells")
        H = self.hidden
        D = self.input_dim
        expect = [(D, H), (D, H), (2 * H, H), (2 * H, H)]
        for cell, (d_in, h) in zip(self.cells, expect):
            if cell.W.shape != (3 * h, d_in) or cell.U.shape != (3 * h, h):
                raise WiringError(f"cell shapes {cell.W.shape}/{cell.U.shape} do not match "
                                  f"input {d_in}, hidden {h}")
        if self.V.shape != (self.n_classes, 2 * H):
            raise WiringError(f"vote head {self.V.shape} does not match hidden {H}")

    @property
    def n_classes(self) -> int:
        return len(self.c)

    @property
    def hidden(self) -> int:
        return self.cells[0].hidden

    @property
    def input_dim(self) -> int:
        return self.cells[0].input_dim

    @property
    def dtype(self):
        return self.V.dtype

    def weights(self) -> list[np.ndarray]:
        """Trainable tensors in checkpoint order."""
        out = []
        for cell in self.cells:
            out += [cell.W, cell.U]
        return out + [self.V, self.c]

    def decayed(self) -> list[bool]:
        """Which entries of :meth:`weights` carry the L2 penalty (matrices, not the head bias)."""
        return [True] * 8 + [True, False]

    def copy(self) -> "ModelParams":
        return ModelParams(
            cells=[GruCellParams(c.W.copy(), c.U.copy()) for c in self.cells],
            V=self.V.copy(), c=self.c.copy(),
            feat_mean=None if self.feat_mean is None else self.feat_mean.copy(),
            feat_scale=None if self.feat_scale is None else self.feat_scale.copy(),
            candidate=self.candidate, keep_prob=self.keep_prob, l2_lambda=self.l2_lambda,
            lr=self.lr, classes=list(self.classes))


@dataclass
class OptimizerState:
    acc: list[np.ndarray]
    step: int = 0
    decay: float = RMS_DECAY
    eps: float = RMS_EPS

    @classmethod
    def fresh(cls, params: ModelParams) -> "OptimizerState":
        return cls(acc=[np.zeros_like(w) for w in params.weights()])


def _glorot(rng, shape, dtype):
    fan_out, fan_in = shape
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape).astype(dtype)


def init_params(rng: np.random.Generator, n_classes: int, input_dim: int, hidden: int = HIDDEN,
                candidate: str = "sigmoid", dtype=np.float32, classes: Sequence[str] | None = None,
                **hyper) -> ModelParams:
    """Glorot-uniform init of every matrix; each gate block uses its own fan-in/fan-out."""
    cells = []
    for d_in in (input_dim, input_dim, 2 * hidden, 2 * hidden):
        W = np.concatenate([_glorot(rng, (hidden, d_in), dtype) for _ in range(3)])
        U = np.concatenate([_glorot(rng, (hidden, hidden), dtype) for _ in range(3)])
        cells.append(GruCellParams(W, U))
    V = _glorot(rng, (n_classes, 2 * hidden), dtype)
    c = np.zeros(n_classes, dtype=dtype)
    classes = list(classes) if classes is not None else [str(i) for i in range(n_classes)]
    return ModelParams(cells=cells, V=V, c=c, candidate=candidate, classes=classes, **hyper)


def gru_cell_step(cell: GruCellParams, x, h_prev, candidate: str = "sigmoid") -> np.ndarray:
    """One GRU update; ``x`` and ``h_prev`` may carry a leading batch axis."""
    x = np.asarray(x)
    h_prev = np.asarray(h_prev)
    if x.shape[-1] != cell.input_dim or h_prev.shape[-1] != cell.hidden:
        raise WiringError(f"input {x.shape} / state {h_prev.shape} do not fit cell "
                          f"({cell.input_dim} -> {cell.hidden})")
    act, _ = _ACTIVATIONS[candidate]
    H = cell.hidden
    a = x @ cell.W.T
    g = h_prev @ cell.U[:2 * H].T
    z = sigmoid(a[..., :H] + g[..., :H])
    r = sigmoid(a[..., H:2 * H] + g[..., H:])
    cand = act(a[..., 2 * H:] + (r * h_prev) @ cell.U[2 * H:].T)
    return z * h_prev + (1.0 - z) * cand


# ---------------------------------------------------------------- sequences

@njit(cache=True)
def _cell_forward(A, Uzr, Uh, tanh_candidate, one):
    # A: (T, B, 3H) input projections, time-major; ``one`` is typed like A so
    # float32 runs stay in single precision. exp-based forms are ~3x faster
    # than np.tanh here.
    T, B, H3 = A.shape
    H = H3 // 3
    h = np.zeros((B, H), dtype=A.dtype)
    hs = np.empty((T, B, H), dtype=A.dtype)
    hprev = np.empty_like(hs)
    zs = np.empty_like(hs)
    rs = np.empty_like(hs)
    cs = np.empty_like(hs)
    rh = np.empty((B, H), dtype=A.dtype)
    for t in range(T):
        g = np.dot(h, Uzr)
        for b in range(B):
            for j in range(H):
                zs[t, b, j] = one / (one + np.exp(-(A[t, b, j] + g[b, j])))
                r = one / (one + np.exp(-(A[t, b, H + j] + g[b, H + j])))
                rs[t, b, j] = r
                rh[b, j] = r * h[b, j]
        ch = np.dot(rh, Uh)
        for b in range(B):
            for j in range(H):
                a = A[t, b, 2 * H + j] + ch[b, j]
                if tanh_candidate:
                    c = one - (one + one) / (np.exp(a + a) + one)
                else:
                    c = one / (one + np.exp(-a))
                z = zs[t, b, j]
                hprev[t, b, j] = h[b, j]
                cs[t, b, j] = c
                h[b, j] = c + z * (h[b, j] - c)
                hs[t, b, j] = h[b, j]
    return hs, hprev, zs, rs, cs


@njit(cache=True)
def _cell_backward(dHs, hprev, zs, rs, cs, Uzr_rows, Uh_rows, tanh_candidate):
    # returns dA (T, B, 3H); Uzr_rows = U[:2H], Uh_rows = U[2H:]
    T, B, H = dHs.shape
    dA = np.empty((T, B, 3 * H), dtype=dHs.dtype)
    dh = np.zeros((B, H), dtype=dHs.dtype)
    dac = np.empty((B, H), dtype=dHs.dtype)
    dzr = np.empty((B, 2 * H), dtype=dHs.dtype)
    for t in range(T - 1, -1, -1):
        for b in range(B):
            for j in range(H):
                dh[b, j] += dHs[t, b, j]
                c = cs[t, b, j]
                z = zs[t, b, j]
                if tanh_candidate:
                    dc = 1.0 - c * c
                else:
                    dc = c * (1.0 - c)
                dac[b, j] = dh[b, j] * (1.0 - z) * dc
                dzr[b, j] = dh[b, j] * (hprev[t, b, j] - c) * z * (1.0 - z)
        drh = np.dot(dac, Uh_rows)
        for b in range(B):
            for j in range(H):
                r = rs[t, b, j]
                dzr[b, H + j] = drh[b, j] * hprev[t, b, j] * r * (1.0 - r)
        back = np.dot(dzr, Uzr_rows)
        for b in range(B):
            for j in range(H):
                dA[t, b, j] = dzr[b, j]
                dA[t, b, H + j] = dzr[b, H + j]
                dA[t, b, 2 * H + j] = dac[b, j]
                dh[b, j] = dh[b, j] * zs[t, b, j] + drh[b, j] * rs[t, b, j] + back[b, j]
    return dA


def _run_cell(cell: GruCellParams, X: np.ndarray, candidate: str):
    """Unroll over axis 0 of time-major ``X`` (T, B, D). Returns states (T, B, H) and the BPTT cache."""
    H = cell.hidden
    A = np.ascontiguousarray(X @ cell.W.T)
    Uzr = np.ascontiguousarray(cell.U[:2 * H].T)
    Uh = np.ascontiguousarray(cell.U[2 * H:].T)
    dt = A.dtype.type
    hs, hprev, zs, rs, cs = _cell_forward(A, Uzr, Uh, candidate == "tanh", dt(1.0))
    return hs, (X, hprev, zs, rs, cs)


def _run_cell_backward(cell: GruCellParams, dHs: np.ndarray, cache, candidate: str):
    """Gradients of the cell's weights and inputs given dL/dh at every step (time-major)."""
    X, hprev, zs, rs, cs = cache
    H = cell.hidden
    dA = _cell_backward(np.ascontiguousarray(dHs), hprev, zs, rs, cs,
                        np.ascontiguousarray(cell.U[:2 * H]), np.ascontiguousarray(cell.U[2 * H:]),
                        candidate == "tanh")
    flatA = dA.reshape(-1, 3 * H)
    dW = flatA.T @ X.reshape(-1, X.shape[2])
    dU = np.empty_like(cell.U)
    dU[:2 * H] = flatA[:, :2 * H].T @ hprev.reshape(-1, H)
    dU[2 * H:] = flatA[:, 2 * H:].T @ (rs * hprev).reshape(-1, H)
    dX = dA @ cell.W
    return dW, dU, dX


def _bidirectional(fwd: GruCellParams, bwd: GruCellParams, X, candidate):
    # X time-major (T, B, D); output (T, B, 2H) with the backward states re-aligned in time
    hf, cf = _run_cell(fwd, X, candidate)
    hb, cb = _run_cell(bwd, np.ascontiguousarray(X[::-1]), candidate)
    return np.concatenate([hf, hb[::-1]], axis=2), (cf, cb)


def _bidirectional_backward(fwd, bwd, dOut, cache, candidate):
    H = fwd.hidden
    cf, cb = cache
    dWf, dUf, dXf = _run_cell_backward(fwd, dOut[:, :, :H], cf, candidate)
    dWb, dUb, dXb = _run_cell_backward(bwd, dOut[::-1, :, H:], cb, candidate)
    return (dWf, dUf), (dWb, dUb), dXf + dXb[::-1]


def vote_positions(n_windows: int) -> np.ndarray:
    """0-based indices of windows 6, 12, ..., F at which votes are emitted."""
    if n_windows % VOTE_EVERY or n_windows == 0:
        raise ConfigurationError(f"window count {n_windows} is not a positive multiple of {VOTE_EVERY}")
    return np.arange(VOTE_EVERY - 1, n_windows, VOTE_EVERY)


def standardize(params: ModelParams, X: np.ndarray) -> np.ndarray:
    if params.feat_mean is None or params.feat_scale is None:
        raise ConfigurationError("model has no feature standardization statistics")
    return ((X - params.feat_mean) / params.feat_scale).astype(params.dtype)


def fit_standardization(params: ModelParams, matrices: Sequence[SegmentMatrix]) -> None:
    """Freeze per-dimension mean and scale from training feature rows."""
    rows = np.concatenate([m.features for m in matrices])
    mean = rows.mean(axis=0)
    scale = rows.std(axis=0)
    scale[scale < 1e-8] = 1.0
    params.feat_mean = mean.astype(params.dtype)
    params.feat_scale = scale.astype(params.dtype)


def _dropout_masks(params: ModelParams, B: int, rng: np.random.Generator):
    # one mask per sequence and layer, shared across time
    keep = params.keep_prob
    H2 = 2 * params.hidden
    if keep >= 1.0:
        return None
    return [(rng.random((1, B, H2)) < keep).astype(params.dtype) / params.dtype.type(keep)
            for _ in range(2)]


def _log_softmax(logits):
    m = logits.max(axis=-1, keepdims=True)
    s = logits - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def forward(params: ModelParams, X: np.ndarray, train: bool = False,
            rng: np.random.Generator | None = None):
    """Vote log-probabilities (B, M, C) for raw feature tensors ``X`` (B, F, D)."""
    X = np.asarray(X)
    if X.ndim != 3 or X.shape[2] != params.input_dim:
        raise WiringError(f"expected (B, F, {params.input_dim}) features, got {X.shape}")
    pos = vote_positions(X.shape[1])
    Xs = np.ascontiguousarray(standardize(params, X).transpose(1, 0, 2))
    masks = None
    if train:
        if rng is None:
            raise ConfigurationError("train mode needs a random generator for dropout")
        masks = _dropout_masks(params, X.shape[0], rng)
    c = params.candidate
    O1, cache1 = _bidirectional(params.cells[0], params.cells[1], Xs, c)
    O1d = O1 * masks[0] if masks else O1
    O2, cache2 = _bidirectional(params.cells[2], params.cells[3], O1d, c)
    O2d = O2 * masks[1] if masks else O2
    S = O2d[pos].transpose(1, 0, 2)
    logp = _log_softmax(S @ params.V.T + params.c)
    return logp, (pos, masks, cache1, cache2, S, O2d.shape)


def encode_segment(params: ModelParams, segment: SegmentMatrix | np.ndarray, train: bool = False,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Vote vectors (M, C) for one segment matrix."""
    feats = segment.features if isinstance(segment, SegmentMatrix) else np.asarray(segment)
    logp, _ = forward(params, feats[None], train=train, rng=rng)
    return np.exp(logp[0])


def predict_votes(params: ModelParams, matrices: Sequence[SegmentMatrix], chunk: int = 64) -> np.ndarray:
    """Eval-mode votes for many segments: (N, M, C)."""
    out = []
    for i in range(0, len(matrices), chunk):
        X = np.stack([m.features for m in matrices[i:i + chunk]])
        out.append(np.exp(forward(params, X)[0]))
    return np.concatenate(out)


def l2_penalty(params: ModelParams) -> float:
    return params.l2_lambda * sum(float(np.sum(w.astype(np.float64) ** 2))
                                  for w, d in zip(params.weights(), params.decayed()) if d)


def _check_labels(labels, n_classes):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelError(f"labels must lie in [0, {n_classes}), got {labels.min()}..{labels.max()}")
    return labels


def loss(votes: np.ndarray, label: int, params: ModelParams) -> float:
    """Mean cross-entropy of one segment's votes plus the L2 penalty."""
    votes = np.asarray(votes, dtype=np.float64)
    if votes.ndim != 2 or len(votes) == 0:
        raise ValueError("votes must be a nonempty (M, C) array")
    _check_labels([label], votes.shape[1])
    with np.errstate(divide="ignore"):
        ce = -np.log(votes[:, label])
    return float(ce.mean()) + l2_penalty(params)


def batch_loss(params: ModelParams, X: np.ndarray, labels, train: bool = False,
               rng: np.random.Generator | None = None) -> float:
    """Batch-mean loss without gradients."""
    labels = _check_labels(labels, params.n_classes)
    logp, _ = forward(params, X, train=train, rng=rng)
    B, M, _ = logp.shape
    data = -float(logp[np.arange(B), :, labels].astype(np.float64).sum()) / (B * M)
    return data + l2_penalty(params)


def loss_and_grads(params: ModelParams, X: np.ndarray, labels, train: bool = True,
                   rng: np.random.Generator | None = None):
    """Batch-mean loss and its exact gradient for every entry of ``params.weights()``."""
    labels = _check_labels(labels, params.n_classes)
    logp, (pos, masks, cache1, cache2, S, o2shape) = forward(params, X, train=train, rng=rng)
    B, M, C = logp.shape
    idx = np.arange(B)
    data = -float(logp[idx, :, labels].astype(np.float64).sum()) / (B * M)
    total = data + l2_penalty(params)

    dlogits = np.exp(logp)
    dlogits[idx, :, labels] -= 1.0
    dlogits /= B * M
    dV = np.einsum("bmc,bmh->ch", dlogits, S)
    dc = dlogits.sum(axis=(0, 1))
    dO2 = np.zeros(o2shape, dtype=params.dtype)
    dO2[pos] = (dlogits @ params.V).transpose(1, 0, 2)
    if masks:
        dO2 *= masks[1]
    c = params.candidate
    g3, g4, dO1 = _bidirectional_backward(params.cells[2], params.cells[3], dO2, cache2, c)
    if masks:
        dO1 *= masks[0]
    g1, g2, _ = _bidirectional_backward(params.cells[0], params.cells[1], dO1, cache1, c)
    grads = [*g1, *g2, *g3, *g4, dV, dc]
    lam = params.l2_lambda
    grads = [g + 2 * lam * w if d else g
             for g, w, d in zip(grads, params.weights(), params.decayed())]
    return total, [g.astype(params.dtype, copy=False) for g in grads]


def backward(batch: Batch, params: ModelParams, rng: np.random.Generator, step: int = 0):
    """Train-mode loss and gradients for a batch; raises on a non-finite loss."""
    total, grads = loss_and_grads(params, batch.x, batch.labels, train=True, rng=rng)
    if not math.isfinite(total):
        raise DivergenceError(step)
    return total, grads


def rmsprop_step(state: OptimizerState, params: ModelParams, grads: Sequence[np.ndarray],
                 lr: float | None = None) -> None:
    """In-place RMSProp update of ``params`` and ``state``."""
    lr = params.lr if lr is None else lr
    weights = params.weights()
    if len(grads) != len(weights):
        raise WiringError("gradient list does not match parameters")
    for w, g, acc in zip(weights, grads, state.acc):
        if g.shape != w.shape:
            raise WiringError(f"gradient shape {g.shape} != parameter shape {w.shape}")
        acc *= state.decay
        acc += (1.0 - state.decay) * g * g
        w -= lr * g / np.sqrt(acc + state.eps)
    state.step += 1


# ---------------------------------------------------------------- checkpoints
#
# Layout (little endian):
#   b"SIDM" | u16 version | u32 header length | header JSON (utf-8)
#   tensors in order: per cell (l1_fwd, l1_bwd, l2_fwd, l2_bwd) W then U;
#   V; c; feat_mean; feat_scale; then optimizer accumulators in the same
#   order as the trainable tensors; all raw, row-major, dtype from header
#   | u32 CRC32 of everything before it

CKPT_MAGIC = b"SIDM"
CKPT_VERSION = 1
_DTYPES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8")}


def _header(params: ModelParams, state: OptimizerState | None) -> dict:
    return {
        "version": CKPT_VERSION,
        "n_classes": params.n_classes,
        "classes": params.classes,
        "hidden": params.hidden,
        "input_dim": params.input_dim,
        "candidate_activation": params.candidate,
        "dtype": params.dtype.str[1:],
        "keep_prob": params.keep_prob,
        "l2_lambda": params.l2_lambda,
        "lr": params.lr,
        "feature_stats": params.feat_mean is not None,
        "optimizer": None if state is None else {
            "step": state.step, "decay": state.decay, "eps": state.eps},
    }


def save_checkpoint(params: ModelParams, state: OptimizerState | None, path: str | os.PathLike) -> None:
    header = _header(params, state)
    if params.dtype.str[1:] not in _DTYPES:
        raise CheckpointError(f"unsupported dtype {params.dtype}")
    dt = _DTYPES[header["dtype"]]
    buf = io.BytesIO()
    hjson = json.dumps(header, sort_keys=True).encode("utf-8")
    buf.write(CKPT_MAGIC + struct.pack("<HI", CKPT_VERSION, len(hjson)) + hjson)
    tensors = list(params.weights())
    if params.feat_mean is not None:
        tensors += [params.feat_mean, params.feat_scale]
    if state is not None:
        tensors += state.acc
    for t in tensors:
        buf.write(np.ascontiguousarray(t, dtype=dt).tobytes())
    blob = buf.getvalue()
    Path(path).write_bytes(blob + struct.pack("<I", zlib.crc32(blob)))
    sidecar = {k: v for k, v in header.items()}
    if params.feat_mean is not None:
        sidecar["feature_mean"] = params.feat_mean.astype(float).tolist()
        sidecar["feature_scale"] = params.feat_scale.astype(float).tolist()
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")


def load_checkpoint(path: str | os.PathLike, expect_classes: int | None = None):
    """Inverse of :func:`save_checkpoint`; returns ``(params, state_or_None)``."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from None
    if len(blob) < 14 or blob[:4] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    version, hlen = struct.unpack_from("<HI", blob, 4)
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: version {version}, expected {CKPT_VERSION}")
    if zlib.crc32(body) != crc:
        raise CheckpointError(f"{path}: truncated or corrupted (checksum mismatch)")
    try:
        header = json.loads(body[10:10 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointError(f"{path}: unreadable header") from None
    dt = _DTYPES.get(header.get("dtype"))
    if dt is None:
        raise CheckpointError(f"{path}: unsupported dtype {header.get('dtype')}")
    C, H, D = header["n_classes"], header["hidden"], header["input_dim"]
    if expect_classes is not None and expect_classes != C:
        raise ConfigurationError(f"checkpoint has {C} classes, data has {expect_classes}")
    shapes = [(3 * H, D), (3 * H, H), (3 * H, D), (3 * H, H),
              (3 * H, 2 * H), (3 * H, H), (3 * H, 2 * H), (3 * H, H), (C, 2 * H), (C,)]
    n_trainable = len(shapes)
    if header["feature_stats"]:
        shapes += [(D,), (D,)]
    if header["optimizer"] is not None:
        shapes += shapes[:n_trainable]
    pos = 10 + hlen
    need = pos + sum(int(np.prod(s)) for s in shapes) * dt.itemsize
    if need != len(body):
        raise CheckpointError(f"{path}: expected {need} bytes of payload, found {len(body)}")
    arrays = []
    for s in shapes:
        n = int(np.prod(s))
        arrays.append(np.frombuffer(body, dtype=dt, count=n, offset=pos).reshape(s).astype(dt.newbyteorder("=")))
        pos += n * dt.itemsize
    cells = [GruCellParams(arrays[2 * i], arrays[2 * i + 1]) for i in range(4)]
    params = ModelParams(cells=cells, V=arrays[8], c=arrays[9],
                         candidate=header["candidate_activation"], keep_prob=header["keep_prob"],
                         l2_lambda=header["l2_lambda"], lr=header["lr"], classes=header["classes"])
    k = n_trainable
    if header["feature_stats"]:
        params.feat_mean, params.feat_scale = arrays[k], arrays[k + 1]
        k += 2
    state = None
    if header["optimizer"] is not None:
        opt = header["optimizer"]
        state = OptimizerState(acc=arrays[k:k + n_trainable], step=opt["step"],
                               decay=opt["decay"], eps=opt["eps"])
    return params, state
