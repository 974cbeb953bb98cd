"""Decision-forest baseline on per-window summary statistics."""
from __future__ import annotations

import io
import math
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CheckpointError, FitError

N_SUMMARY = 7


@dataclass
class SummaryFeatures:
    mean: float
    std: float
    min: float
    max: float
    median: float
    iqr: float
    mean_velocity: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.mean, self.std, self.min, self.max, self.median, self.iqr,
                         self.mean_velocity])


def summarize_window(window, velocity) -> SummaryFeatures:
    window = np.asarray(window, dtype=np.float64)
    if len(window) < 2:
        raise ValueError("window needs at least two samples")
    q1, med, q3 = np.percentile(window, [25, 50, 75])
    return SummaryFeatures(mean=float(window.mean()), std=float(window.std()),
                           min=float(window.min()), max=float(window.max()),
                           median=float(med), iqr=float(q3 - q1),
                           mean_velocity=float(np.mean(velocity)))


def summary_matrix(steering, velocity, w: int) -> np.ndarray:
    """Summary rows for all complete non-overlapping windows of ``w`` samples."""
    steering = np.asarray(steering, dtype=np.float64)
    n = len(steering) // w
    s = steering[: n * w].reshape(n, w)
    v = np.asarray(velocity, dtype=np.float64)[: n * w].reshape(n, w)
    q1, med, q3 = np.percentile(s, [25, 50, 75], axis=1)
    return np.column_stack([s.mean(axis=1), s.std(axis=1), s.min(axis=1), s.max(axis=1),
                            med, q3 - q1, v.mean(axis=1)])


@dataclass
class Tree:
    feature: np.ndarray    # -1 at leaves
    threshold: np.ndarray  # go left when x[feature] <= threshold
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # (n_nodes, n_classes) class counts

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active[idx] = self.feature[node[idx]] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.value[self.apply(X)], axis=1)


@dataclass
class Forest:
    trees: list[Tree]
    n_classes: int
    n_features: int
    oob_accuracy: float = float("nan")

    def tree_votes(self, X: np.ndarray) -> np.ndarray:
        """(n_samples, n_classes) count of trees voting for each class."""
        X = np.asarray(X, dtype=np.float64)
        votes = np.zeros((len(X), self.n_classes), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees:
            np.add.at(votes, (rows, tree.predict(X)), 1)
        return votes

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.tree_votes(X), axis=1)


def _best_split(Xn: np.ndarray, yn: np.ndarray, features: np.ndarray, n_classes: int):
    """Lowest weighted Gini over candidate features; thresholds are training values."""
    n = len(yn)
    best = (math.inf, -1, 0.0)
    onehot = np.zeros((n, n_classes))
    for f in features:
        order = np.argsort(Xn[:, f], kind="stable")
        xs = Xn[order, f]
        onehot[:] = 0.0
        onehot[np.arange(n), yn[order]] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        right = left[-1] + onehot[-1] - left
        gl = 1.0 - np.sum(left ** 2, axis=1) / nl ** 2
        gr = 1.0 - np.sum(right ** 2, axis=1) / nr ** 2
        score = np.where(valid, nl * gl + nr * gr, math.inf)
        i = int(np.argmin(score))
        if score[i] < best[0] - 1e-12:
            best = (float(score[i]), int(f), float(xs[i]))
    return best


def fit_tree(X: np.ndarray, y: np.ndarray, n_classes: int, rng: np.random.Generator,
             max_depth: int = 12, min_samples_split: int = 5, max_features: int | None = None) -> Tree:
    d = X.shape[1]
    mtry = max_features or max(1, int(math.sqrt(d)))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(np.bincount(y[idx], minlength=n_classes))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = value[node]
        if depth >= max_depth or len(idx) < min_samples_split or np.count_nonzero(counts) <= 1:
            continue
        cand = rng.choice(d, size=min(mtry, d), replace=False)
        score, f, thr = _best_split(X[idx], y[idx], cand, n_classes)
        if f < 0:
            continue
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value, dtype=np.float64))


def fit_forest(X, y, rng: np.random.Generator, n_classes: int | None = None, n_trees: int = 100,
               max_depth: int = 12, min_samples_split: int = 5) -> Forest:
    """Bagged Gini trees with sqrt(d) candidate features per node; records out-of-bag accuracy."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_classes = n_classes or int(y.max()) + 1
    if len(np.unique(y)) < 2:
        raise FitError("need at least two classes to fit a forest")
    n = len(y)
    trees = []
    oob_votes = np.zeros((n, n_classes), dtype=np.int64)
    for _ in range(n_trees):
        boot = rng.integers(n, size=n)
        tree = fit_tree(X[boot], y[boot], n_classes, rng, max_depth, min_samples_split)
        trees.append(tree)
        oob = np.ones(n, dtype=bool)
        oob[boot] = False
        if oob.any():
            rows = np.flatnonzero(oob)
            np.add.at(oob_votes, (rows, tree.predict(X[rows])), 1)
    seen = oob_votes.sum(axis=1) > 0
    oob_acc = float(np.mean(np.argmax(oob_votes[seen], axis=1) == y[seen])) if seen.any() else float("nan")
    return Forest(trees=trees, n_classes=n_classes, n_features=X.shape[1], oob_accuracy=oob_acc)


def classify_segment(forest: Forest, windows: np.ndarray) -> int:
    """Majority over per-window forest decisions; ties go to the lowest class index."""
    pred = forest.predict(windows)
    return int(np.argmax(np.bincount(pred, minlength=forest.n_classes)))


# Layout (little endian): b"SIDR" | u16 version | u32 n_classes, n_features, n_trees
# | f8 oob accuracy | per tree: u32 n_nodes, i4 feature[n], f8 threshold[n],
# i4 left[n], i4 right[n], f8 value[n * n_classes] | u32 CRC32
FOREST_MAGIC = b"SIDR"
FOREST_VERSION = 1


def save_forest(forest: Forest, path: str | os.PathLike) -> None:
    buf = io.BytesIO()
    buf.write(FOREST_MAGIC + struct.pack("<HIIId", FOREST_VERSION, forest.n_classes,
                                         forest.n_features, len(forest.trees), forest.oob_accuracy))
    for t in forest.trees:
        buf.write(struct.pack("<I", t.n_nodes))
        buf.write(t.feature.astype("<i4").tobytes())
        buf.write(t.threshold.astype("<f8").tobytes())
        buf.write(t.left.astype("<i4").tobytes())
        buf.write(t.right.astype("<i4").tobytes())
        buf.write(t.value.astype("<f8").tobytes())
    blob = buf.getvalue()
    Path(path).write_bytes(blob + struct.pack("<I", zlib.crc32(blob)))


def load_forest(path: str | os.PathLike) -> Forest:
    blob = Path(path).read_bytes()
    head = struct.Struct("<4sHIIId")
    if len(blob) < head.size + 4 or blob[:4] != FOREST_MAGIC:
        raise CheckpointError(f"{path}: not a forest file")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError(f"{path}: truncated or corrupted (checksum mismatch)")
    _, version, C, d, n_trees, oob = head.unpack_from(body, 0)
    if version != FOREST_VERSION:
        raise CheckpointError(f"{path}: version {version}, expected {FOREST_VERSION}")
    pos = head.size
    trees = []

    def take(dtype, count):
        nonlocal pos
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=pos)
        pos += arr.nbytes
        return arr

    for _ in range(n_trees):
        (n,) = struct.unpack_from("<I", body, pos)
        pos += 4
        feature = take("<i4", n).astype(np.int64)
        threshold = take("<f8", n).astype(np.float64)
        left = take("<i4", n).astype(np.int64)
        right = take("<i4", n).astype(np.int64)
        value = take("<f8", n * C).reshape(n, C).astype(np.float64)
        trees.append(Tree(feature, threshold, left, right, value))
    return Forest(trees=trees, n_classes=C, n_features=d, oob_accuracy=oob)


def segment_summaries(segments: Sequence, w: int) -> list[np.ndarray]:
    """Per-segment window summary matrices, using the same windows as the GRU features."""
    out = []
    for seg in segments:
        n_win = 6 * ((len(seg) // w) // 6)
        out.append(summary_matrix(seg.steering[: n_win * w], seg.velocity[: n_win * w], w))
    return out
