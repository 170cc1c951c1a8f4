"""Supervised baselines: a small MLP and a random forest, both in plain numpy,
plus landmark retraining on a growing dataset."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .envsim import VnfKind

SPLIT_STREAM = 0x5B11
MLP_STREAM = 0x3A1F
RF_STREAM = 0x7F0E

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

MLP_WIDTHS = {
    VnfKind.SNORT_INLINE: (512, 256, 256),
    VnfKind.SNORT_PASSIVE: (256, 128, 128),
    VnfKind.VFW: (128, 128, 128),
}
RF_TREES = {VnfKind.SNORT_INLINE: 500, VnfKind.SNORT_PASSIVE: 500, VnfKind.VFW: 800}


class DatasetSizeError(ValueError):
    """Dataset too small for the requested operation."""


# ---------------------------------------------------------------- scaling and splits

@dataclass(frozen=True)
class MinMaxScaler:
    lo: np.ndarray
    hi: np.ndarray

    @property
    def span(self) -> np.ndarray:
        return self.hi - self.lo

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        span = self.span
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (x - self.lo) / safe, 0.0)

    def inverse(self, z) -> np.ndarray:
        return self.lo + np.asarray(z, dtype=float) * self.span


def minmax_scale(data) -> tuple[np.ndarray, MinMaxScaler]:
    """Map every column onto [0, 1]; constant columns map to 0."""
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise DatasetSizeError("cannot scale an empty dataset")
    scaler = MinMaxScaler(x.min(axis=0), x.max(axis=0))
    return scaler.transform(x), scaler


def split_90_10(dataset, seed: int):
    """Seeded shuffle, then 90% train and 10% test."""
    n = len(dataset)
    if n < 10:
        raise DatasetSizeError(f"need at least 10 rows to split, got {n}")
    perm = np.random.default_rng([seed, SPLIT_STREAM]).permutation(n)
    n_test = int(round(0.1 * n))
    test, train = perm[:n_test], perm[n_test:]
    if isinstance(dataset, np.ndarray):
        return dataset[train], dataset[test]
    return [dataset[i] for i in train], [dataset[i] for i in test]


# ---------------------------------------------------------------- MLP

@dataclass(frozen=True)
class MlpSpec:
    """Fully connected net: SELU hidden layers, logistic outputs, Adam on MSE."""

    hidden: tuple[int, ...] = (512, 256, 256)
    n_in: int = 4
    n_out: int = 3
    epochs: int = 500
    batch_size: int = 16
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if min(self.hidden, default=1) <= 0 or self.n_in <= 0 or self.n_out <= 0:
            raise ValueError("layer widths must be positive")
        if self.epochs < 0 or self.batch_size <= 0 or self.lr <= 0:
            raise ValueError("epochs >= 0, batch_size > 0 and lr > 0 required")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.n_in, *self.hidden, self.n_out)


def mlp_spec_for(kind: VnfKind | str, **overrides) -> MlpSpec:
    kind = VnfKind.parse(kind) if isinstance(kind, str) else kind
    return MlpSpec(**{"hidden": MLP_WIDTHS[kind], **overrides})


def selu(x: np.ndarray) -> np.ndarray:
    return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def selu_grad(x: np.ndarray) -> np.ndarray:
    return SELU_LAMBDA * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class Mlp:
    def __init__(self, spec: MlpSpec, rng: np.random.Generator | None = None):
        self.spec = spec
        rng = rng if rng is not None else np.random.default_rng([spec.seed, MLP_STREAM])
        w = spec.widths
        # LeCun normal init, the usual pairing for SELU
        self.weights = [rng.standard_normal((a, b)) / math.sqrt(a) for a, b in zip(w[:-1], w[1:])]
        self.biases = [np.zeros(b) for b in w[1:]]

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def forward(self, x: np.ndarray):
        h = np.asarray(x, dtype=float)
        pre = []
        acts = [h]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            pre.append(z)
            h = sigmoid(z) if i == last else selu(z)
            acts.append(h)
        return h, (pre, acts)

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        out = self.forward(np.atleast_2d(x))[0]
        return out[0] if single else out

    def loss(self, x, y) -> float:
        pred = self.forward(x)[0]
        return float(np.mean((pred - np.asarray(y, dtype=float)) ** 2))

    def gradients(self, x, y) -> tuple[float, list[np.ndarray]]:
        """MSE loss and its gradient for every parameter (same order as `params`)."""
        y = np.asarray(y, dtype=float)
        out, (pre, acts) = self.forward(x)
        diff = out - y
        loss = float(np.mean(diff ** 2))
        delta = 2.0 * diff / diff.size * out * (1.0 - out)
        grads: list[np.ndarray] = []
        for i in range(len(self.weights) - 1, -1, -1):
            grads.append(delta.sum(axis=0))
            grads.append(acts[i].T @ delta)
            if i > 0:
                delta = (delta @ self.weights[i].T) * selu_grad(pre[i - 1])
        # built back to front as (db, dW) pairs; reversing gives (dW0, db0, dW1, ...)
        grads.reverse()
        return loss, grads


def train_mlp(spec: MlpSpec, x, y, rng: np.random.Generator | None = None) -> Mlp:
    """Mini-batch Adam on inputs and targets already scaled to [0, 1]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] == 0:
        raise DatasetSizeError("empty training set")
    if rng is None:
        rng = np.random.default_rng([spec.seed, MLP_STREAM])
    net = Mlp(spec, rng)
    params = net.params
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, lr, eps = spec.beta1, spec.beta2, spec.lr, spec.adam_eps
    n, bs = x.shape[0], spec.batch_size
    t = 0
    for _ in range(spec.epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            batch = order[start:start + bs]
            _, grads = net.gradients(x[batch], y[batch])
            t += 1
            c1 = 1.0 - b1 ** t
            c2 = 1.0 - b2 ** t
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= b1
                mi += (1.0 - b1) * g
                vi *= b2
                vi += (1.0 - b2) * g * g
                p -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)
    return net


# ---------------------------------------------------------------- random forest

@dataclass(frozen=True)
class RfSpec:
    n_trees: int = 500
    max_depth: int | None = None
    min_leaf: int = 5
    feature_fraction: float = 1.0 / 3.0
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees <= 0 or self.min_leaf <= 0:
            raise ValueError("n_trees and min_leaf must be positive")
        if not 0 < self.feature_fraction <= 1:
            raise ValueError("feature_fraction must lie in (0, 1]")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")

    def n_candidates(self, n_features: int) -> int:
        return max(1, int(self.feature_fraction * n_features))


def rf_spec_for(kind: VnfKind | str, **overrides) -> RfSpec:
    kind = VnfKind.parse(kind) if isinstance(kind, str) else kind
    return RfSpec(**{"n_trees": RF_TREES[kind], **overrides})


@dataclass
class RegressionTree:
    """Array-encoded binary tree; feature -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        node = np.zeros(x.shape[0], dtype=int)
        rows = np.arange(x.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return self.value[node]
            r, nd = rows[inner], node[inner]
            go_left = x[r, f[inner]] <= self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])


def _best_split(x: np.ndarray, y: np.ndarray, feats, min_leaf: int):
    """Best variance-reduction split over `feats`; None if no admissible split."""
    n = x.shape[0]
    total = y.sum(axis=0)
    parent = float(total @ total) / n
    best = None
    best_score = parent + 1e-12 * max(1.0, abs(parent))
    k = np.arange(min_leaf, n - min_leaf + 1)
    if k.size == 0:
        return None
    for f in feats:
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        cs = np.cumsum(y[order], axis=0)
        left = cs[k - 1]
        right = total - left
        score = (left * left).sum(axis=1) / k + (right * right).sum(axis=1) / (n - k)
        valid = xs[k - 1] < xs[k] if k[-1] < n else None
        if valid is None:
            valid = np.ones_like(score, dtype=bool)
            valid[-1] = False
        score = np.where(valid, score, -np.inf)
        j = int(np.argmax(score))
        if score[j] > best_score:
            best_score = float(score[j])
            best = (int(f), 0.5 * (xs[k[j] - 1] + xs[k[j]]))
    return best


def build_tree(x: np.ndarray, y: np.ndarray, spec: RfSpec, rng: np.random.Generator) -> RegressionTree:
    n_features = x.shape[1]
    m = spec.n_candidates(n_features)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(y[idx].mean(axis=0))
        return len(feature) - 1

    stack = [(new_node(np.arange(x.shape[0])), np.arange(x.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if len(idx) < 2 * spec.min_leaf or (spec.max_depth is not None and depth >= spec.max_depth):
            continue
        perm = rng.permutation(n_features)
        # sklearn-style: look at m features, and keep drawing only if none of them splits
        split = _best_split(x[idx], y[idx], perm[:m], spec.min_leaf)
        if split is None and m < n_features:
            split = _best_split(x[idx], y[idx], perm[m:], spec.min_leaf)
        if split is None:
            continue
        f, thr = split
        mask = x[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return RegressionTree(np.array(feature, dtype=int), np.array(threshold), np.array(left, dtype=int),
                          np.array(right, dtype=int), np.array(value))


@dataclass
class RandomForest:
    spec: RfSpec
    trees: list[RegressionTree]

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        out = np.mean([t.predict(x) for t in self.trees], axis=0)
        return out[0] if single else out


def train_rf(spec: RfSpec, x, y, rng: np.random.Generator | None = None) -> RandomForest:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] == 0:
        raise DatasetSizeError("empty training set")
    if rng is None:
        rng = np.random.default_rng([spec.seed, RF_STREAM])
    n = x.shape[0]
    trees = []
    for _ in range(spec.n_trees):
        idx = rng.integers(n, size=n) if spec.bootstrap else np.arange(n)
        trees.append(build_tree(x[idx], y[idx], spec, rng))
    return RandomForest(spec, trees)


# ---------------------------------------------------------------- scaled pipeline

@dataclass
class ScaledRegressor:
    """A model trained on min-max scaled features and targets."""

    model: Mlp | RandomForest
    x_scaler: MinMaxScaler
    y_scaler: MinMaxScaler

    def predict(self, x) -> np.ndarray:
        z = self.model.predict(self.x_scaler.transform(x))
        return self.y_scaler.inverse(z)


def fit_regressor(spec: MlpSpec | RfSpec, x, y) -> ScaledRegressor:
    xs, xsc = minmax_scale(x)
    ys, ysc = minmax_scale(y)
    if isinstance(spec, MlpSpec):
        model = train_mlp(spec, xs, ys)
    else:
        model = train_rf(spec, xs, ys)
    return ScaledRegressor(model, xsc, ysc)


@dataclass
class LandmarkPrediction:
    landmark: int
    n_train: int
    predictions: dict[str, np.ndarray | None] = field(default_factory=dict)
    test_mse: dict[str, float] = field(default_factory=dict)

    @property
    def gap(self) -> bool:
        return self.n_train == 0


def landmark_retrain(stream: Sequence[tuple[int, Sequence[float], Sequence[float]]], landmarks: Sequence[int],
                     specs: Mapping[str, MlpSpec | RfSpec], query: Callable[[int], Sequence[float]] | Sequence[float],
                     split_seed: int = 0) -> list[LandmarkPrediction]:
    """Retrain every model at each landmark on the rows seen so far and predict `query`.

    `stream` holds (episode, features, targets) rows; a landmark L sees the
    rows of episodes < L. With ten or more rows the models train on a 90%
    split and the held-out MSE (scaled units) is recorded.
    """
    if list(landmarks) != sorted(landmarks):
        raise ValueError("landmarks must be sorted ascending")
    rows = sorted(stream, key=lambda r: r[0])
    out = []
    for L in landmarks:
        seen = [r for r in rows if r[0] < L]
        res = LandmarkPrediction(L, 0)
        if not seen:
            for name in specs:
                res.predictions[name] = None
            out.append(res)
            continue
        x = np.array([r[1] for r in seen], dtype=float)
        y = np.array([r[2] for r in seen], dtype=float)
        test_idx = None
        if len(seen) >= 10:
            train_idx, test_idx = split_90_10(np.arange(len(seen)), split_seed + L)
        else:
            train_idx = np.arange(len(seen))
        res.n_train = int(len(train_idx))
        q = np.asarray(query(L) if callable(query) else query, dtype=float)
        for name, spec in specs.items():
            reg = fit_regressor(spec, x[train_idx], y[train_idx])
            res.predictions[name] = reg.predict(q)
            if test_idx is not None and len(test_idx):
                pred = reg.y_scaler.transform(reg.predict(x[test_idx]))
                res.test_mse[name] = float(np.mean((pred - reg.y_scaler.transform(y[test_idx])) ** 2))
        out.append(res)
    return out
