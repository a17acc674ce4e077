"""From-scratch random-forest regressor.

Trees are grown CART-style on bootstrap samples with the squared-error
criterion; split points are midpoints between consecutive distinct sorted
feature values, with impurity ties broken by lowest feature index and then
lowest threshold so training is a pure function of (X, y, config). Trees
are stored as flat arrays, which keeps prediction vectorizable and the
model file a plain JSON document.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODEL_FORMAT = "phxai-forest-v1"


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 500
    max_features_fraction: float = 1.0
    min_samples_leaf: int = 1
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0 < self.max_features_fraction <= 1:
            raise ValueError("max_features_fraction must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees,
                "max_features_fraction": self.max_features_fraction,
                "min_samples_leaf": self.min_samples_leaf,
                "bootstrap": self.bootstrap, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(int(d["n_trees"]), float(d["max_features_fraction"]),
                   int(d["min_samples_leaf"]), bool(d["bootstrap"]), int(d["seed"]))


@dataclass
class Tree:
    """Flat node arrays; `feature` is -1 at leaves and `value` is the leaf mean.

    `decrease` holds each internal node's weighted impurity decrease
    (split gain divided by the training sample count), the raw material of
    impurity importance.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    decrease: np.ndarray

    def predict_one(self, x: np.ndarray) -> float:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] \
                else self.right[node]
        return float(self.value[node])

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        internal = self.feature[node] >= 0
        while internal.any():
            idx = np.flatnonzero(internal)
            f = self.feature[node[idx]]
            go_left = X[idx, f] <= self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])
            internal = self.feature[node] >= 0
        return self.value[node]


@dataclass
class Forest:
    trees: list[Tree]
    config: TrainConfig
    feature_count: int

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "config": self.config.to_dict(),
            "feature_count": self.feature_count,
            "trees": [{
                "feature": t.feature.tolist(), "threshold": t.threshold.tolist(),
                "left": t.left.tolist(), "right": t.right.tolist(),
                "value": t.value.tolist(), "n_samples": t.n_samples.tolist(),
                "decrease": t.decrease.tolist(),
            } for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {d.get('format')!r}")
        trees = [Tree(np.array(t["feature"], dtype=np.int64),
                      np.array(t["threshold"], dtype=float),
                      np.array(t["left"], dtype=np.int64),
                      np.array(t["right"], dtype=np.int64),
                      np.array(t["value"], dtype=float),
                      np.array(t["n_samples"], dtype=np.int64),
                      np.array(t["decrease"], dtype=float))
                 for t in d["trees"]]
        return cls(trees, TrainConfig.from_dict(d["config"]), int(d["feature_count"]))


def _best_split(Xn: np.ndarray, yn: np.ndarray, cols: np.ndarray, min_leaf: int):
    """Exhaustive best split over the given columns.

    Returns (feature, threshold, gain) or None. Gain is the SSE decrease of
    the node; ties go to the lowest feature index, then lowest threshold.
    """
    n = len(yn)
    order = np.argsort(Xn, axis=0, kind="stable")
    Xs = np.take_along_axis(Xn, order, axis=0)
    ys = yn[order]
    cy = np.cumsum(ys, axis=0)
    tot = cy[-1]
    nl = np.arange(1, n, dtype=float)[:, None]
    nr = n - nl
    # minimizing child SSE == maximizing cy^2/nl + (tot-cy)^2/nr
    score = cy[:-1] ** 2 / nl + (tot - cy[:-1]) ** 2 / nr
    valid = Xs[1:] > Xs[:-1]
    if min_leaf > 1:
        ok = (nl >= min_leaf) & (nr >= min_leaf)
        valid = valid & ok
    if not valid.any():
        return None
    score = np.where(valid, score, -np.inf)
    best = score.max()
    ks, fs = np.nonzero(score == best)
    # lowest real feature index first, then lowest threshold (lowest k)
    pick = np.lexsort((ks, cols[fs]))[0]
    k, f = int(ks[pick]), int(fs[pick])
    threshold = (Xs[k, f] + Xs[k + 1, f]) / 2.0
    y_sq = float(np.dot(yn, yn))
    sse_parent = y_sq - float(yn.sum()) ** 2 / n
    sse_children = y_sq - float(best)
    return int(cols[f]), float(threshold), sse_parent - sse_children


def _grow_tree(X: np.ndarray, y: np.ndarray, sample_idx: np.ndarray,
               config: TrainConfig, rng: np.random.Generator) -> Tree:
    d = X.shape[1]
    n_total = len(sample_idx)
    n_sub = max(1, int(np.ceil(config.max_features_fraction * d)))
    feature, threshold, left, right, value, n_samples, decrease = [], [], [], [], [], [], []

    def new_node():
        for a in (feature, threshold, left, right, value, n_samples, decrease):
            a.append(0)
        return len(feature) - 1

    stack = [(sample_idx, new_node())]
    while stack:
        idx, slot = stack.pop()
        yn = y[idx]
        n_samples[slot] = len(idx)
        value[slot] = float(yn.mean())
        feature[slot] = -1
        threshold[slot] = 0.0
        left[slot] = right[slot] = -1
        decrease[slot] = 0.0
        if len(idx) < max(2, 2 * config.min_samples_leaf) or yn.min() == yn.max():
            continue
        if config.max_features_fraction < 1.0:
            cols = np.sort(rng.choice(d, size=n_sub, replace=False))
        else:
            cols = np.arange(d)
        Xn = X[np.ix_(idx, cols)]
        varying = Xn.min(axis=0) < Xn.max(axis=0)
        if not varying.any():
            continue
        split = _best_split(Xn[:, varying], yn, cols[varying], config.min_samples_leaf)
        if split is None:
            continue
        f, thr, gain = split
        go_left = X[idx, f] <= thr
        if not go_left.any() or go_left.all():  # adjacent-float midpoint degeneracy
            continue
        feature[slot] = f
        threshold[slot] = thr
        decrease[slot] = gain / n_total
        l_slot, r_slot = new_node(), new_node()
        left[slot], right[slot] = l_slot, r_slot
        stack.append((idx[~go_left], r_slot))
        stack.append((idx[go_left], l_slot))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value, dtype=float), np.array(n_samples, dtype=np.int64),
                np.array(decrease, dtype=float))


def train(X, y, config: TrainConfig = TrainConfig()) -> Forest:
    """Grow `config.n_trees` trees on bootstrap samples of (X, y).

    Per-tree randomness is derived from config.seed, so training is
    reproducible and trees are independent of evaluation order.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError("X must be a non-empty 2-D table")
    n, d = X.shape
    if n < 2 or len(y) != n:
        raise ValueError("need at least 2 samples and matching targets")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in the training data")
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_trees)
    trees = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        if config.bootstrap:
            sample_idx = rng.integers(0, n, size=n)
        else:
            sample_idx = np.arange(n)
        trees.append(_grow_tree(X, y, sample_idx, config, rng))
    return Forest(trees, config, d)


def predict(forest: Forest, x) -> float:
    """Mean of the per-tree leaf values for a single sample."""
    x = np.asarray(x, dtype=float)
    if x.shape != (forest.feature_count,):
        raise ValueError(f"expected {forest.feature_count} features, got {x.shape}")
    return float(np.mean([t.predict_one(x) for t in forest.trees]))


def predict_batch(forest: Forest, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != forest.feature_count:
        raise ValueError(f"expected (n, {forest.feature_count}) features")
    acc = np.zeros(len(X))
    for t in forest.trees:
        acc += t.predict_batch(X)
    return acc / len(forest.trees)


def r2(predictions, targets) -> float:
    """Coefficient of determination, 1 - SSres/SStot."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape or p.ndim != 1 or len(p) < 2:
        raise ValueError("predictions and targets must be equal-length vectors of size >= 2")
    ss_tot = float(((t - t.mean()) ** 2).sum())
    if ss_tot == 0:
        raise ValueError("targets are constant; R^2 is undefined")
    ss_res = float(((t - p) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def impurity_importance(forest: Forest) -> np.ndarray:
    """Per-feature impurity decrease summed within trees, averaged across
    trees, normalized to sum to 1 (zero vector if no tree ever splits)."""
    total = np.zeros(forest.feature_count)
    for t in forest.trees:
        internal = t.feature >= 0
        np.add.at(total, t.feature[internal], t.decrease[internal])
    total /= len(forest.trees)
    s = total.sum()
    return total / s if s > 0 else total


def permutation_importance(forest: Forest, X, y, repeats: int = 5,
                           seed: int = 0) -> np.ndarray:
    """Mean R^2 drop when each column is independently shuffled."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(seed)
    base = r2(predict_batch(forest, X), y)
    out = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        drops = []
        for _ in range(repeats):
            Xp = X.copy()
            Xp[:, j] = Xp[rng.permutation(len(X)), j]
            drops.append(base - r2(predict_batch(forest, Xp), y))
        out[j] = float(np.mean(drops))
    return out
