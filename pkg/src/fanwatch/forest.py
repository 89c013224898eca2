"""Random forest regression: bagged CART trees with per-split feature subsets.

Trees are grown by a numba kernel. Every feature's row order is sorted once
per tree and stably partitioned as the tree splits, so each depth level
costs O(features * rows) regardless of how many features a node samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from fanwatch.core import ConfigError, DataError, Dataset

_FOREST_STREAM = 11
LEAF = -1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 50
    row_fraction: float = 0.66
    feature_fraction: float = 0.33
    min_leaf: int = 1
    max_depth: int | None = None
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if int(self.n_trees) != self.n_trees or self.n_trees < 1:
            raise ConfigError("n_trees must be a positive integer")
        for name in ("row_fraction", "feature_fraction"):
            if not 0 < getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in (0, 1]")
        if int(self.min_leaf) != self.min_leaf or self.min_leaf < 1:
            raise ConfigError("min_leaf must be a positive integer")
        if self.max_depth is not None and (int(self.max_depth) != self.max_depth or self.max_depth < 1):
            raise ConfigError("max_depth must be a positive integer or None")
        if self.seed < 0:
            raise ConfigError("seed must be unsigned")

    def features_per_split(self, n_features: int) -> int:
        return max(1, min(n_features, math.ceil(self.feature_fraction * n_features)))

    def rows_per_tree(self, n_rows: int) -> int:
        return max(1, math.ceil(self.row_fraction * n_rows))


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Flat node arena; node 0 is the root and ``feature == -1`` marks a leaf.

    Routing: ``x[feature] <= threshold`` goes to ``left``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray

    def __len__(self):
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def predict(self, features) -> np.ndarray:
        x = np.ascontiguousarray(features, dtype=np.float64)
        return _route(x, self.feature, self.threshold, self.left, self.right, self.value)


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[RegressionTree, ...]
    params: ForestParams
    column_names: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "column_names", tuple(self.column_names))
        if len(self.trees) != self.params.n_trees:
            raise DataError("forest must hold params.n_trees trees")

    def predict(self, features) -> np.ndarray:
        return predict(self, features)


@njit(cache=True)
def _grow(x, y, min_leaf, max_depth, n_sub, uniforms):
    m, p = x.shape
    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)

    order = np.empty((p, m), np.int64)
    for f in range(p):
        order[f] = np.argsort(x[:, f], kind="mergesort")
    goes_left = np.zeros(m, np.bool_)
    buf = np.empty(m, np.int64)
    feats = np.empty(p, np.int64)
    chosen = np.empty(n_sub, np.int64)

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m
    st_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        n = end - start
        rows = order[0, start:end]

        total = 0.0
        lo = y[rows[0]]
        hi = lo
        for r in rows:
            v = y[r]
            total += v
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        count[node] = n
        if lo == hi:
            value[node] = lo
            continue
        mean = total / n
        value[node] = mean
        if n < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue

        tot_c = 0.0
        sse = 0.0
        for r in rows:
            d = y[r] - mean
            tot_c += d
            sse += d * d
        base = tot_c * tot_c / n

        for f in range(p):
            feats[f] = f
        u = uniforms[node]
        for j in range(n_sub):
            k = j + int(u[j] * (p - j))
            if k >= p:
                k = p - 1
            tmp = feats[j]
            feats[j] = feats[k]
            feats[k] = tmp
        for j in range(n_sub):
            chosen[j] = feats[j]
        chosen.sort()

        best_gain = 1e-12 * sse
        best_f = -1
        best_pos = -1
        for j in range(n_sub):
            f = chosen[j]
            seg = order[f, start:end]
            cl = 0.0
            for i in range(n - 1):
                cl += y[seg[i]] - mean
                nl = i + 1
                nr = n - nl
                if nl < min_leaf:
                    continue
                if nr < min_leaf:
                    break
                if x[seg[i], f] == x[seg[i + 1], f]:
                    continue
                cr = tot_c - cl
                gain = cl * cl / nl + cr * cr / nr - base
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_pos = i
        if best_f < 0:
            continue

        seg = order[best_f, start:end]
        a = x[seg[best_pos], best_f]
        b = x[seg[best_pos + 1], best_f]
        thr = a + (b - a) / 2.0
        if not (a <= thr < b):
            thr = a
        n_left = best_pos + 1
        for i in range(n_left):
            goes_left[seg[i]] = True
        for f in range(p):
            li = 0
            ri = n_left
            for i in range(start, end):
                r = order[f, i]
                if goes_left[r]:
                    buf[li] = r
                    li += 1
                else:
                    buf[ri] = r
                    ri += 1
            for i in range(n):
                order[f, start + i] = buf[i]
        for i in range(n_left):
            goes_left[order[0, start + i]] = False

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = thr
        left[node] = lid
        right[node] = rid
        # right pushed first so the left subtree is grown first
        st_node[top] = rid
        st_start[top] = start + n_left
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lid
        st_start[top] = start
        st_end[top] = start + n_left
        st_depth[top] = depth + 1
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), count[:n_nodes].copy())


@njit(cache=True)
def _route(x, feature, threshold, left, right, value):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        node = 0
        while feature[node] >= 0:
            if x[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(_FOREST_STREAM, tree_index))
    return np.random.Generator(np.random.PCG64(ss))


def fit_tree(features, target, params: ForestParams, rng: np.random.Generator) -> RegressionTree:
    """Grow one CART regression tree on all given rows.

    Each node considers a random subset of ``params.features_per_split``
    features and picks the (feature, midpoint threshold) with the lowest
    summed child squared error. Ties go to the lower feature index, then
    the smaller threshold.
    """
    x = np.ascontiguousarray(features, dtype=np.float64)
    y = np.ascontiguousarray(target, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("cannot fit a tree on no rows")
    if x.shape[0] != y.shape[0]:
        raise DataError("features and target lengths differ")
    if x.shape[0] < params.min_leaf:
        raise DataError("fewer rows than min_leaf")
    n_sub = params.features_per_split(x.shape[1])
    uniforms = rng.random((2 * x.shape[0] + 1, n_sub))
    depth = -1 if params.max_depth is None else int(params.max_depth)
    return RegressionTree(*_grow(x, y, int(params.min_leaf), depth, n_sub, uniforms))


def fit_rf(ds: Dataset, params: ForestParams) -> ForestModel:
    """Bagged forest; tree i draws its rows from substream (seed, i)."""
    if len(ds) == 0:
        raise DataError("cannot fit a forest on an empty dataset")
    x = np.ascontiguousarray(ds.features)
    y = np.ascontiguousarray(ds.target)
    n = len(ds)
    draws = params.rows_per_tree(n)
    trees = []
    for i in range(params.n_trees):
        rng = _tree_rng(params.seed, i)
        if params.bootstrap:
            rows = rng.integers(0, n, size=draws)
        else:
            rows = np.arange(n)
        trees.append(fit_tree(x[rows], y[rows], params, rng))
    return ForestModel(tuple(trees), params, ds.column_names)


def predict(model: ForestModel, features) -> np.ndarray:
    """Mean of the trees' leaf values per row."""
    x = np.ascontiguousarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != len(model.column_names):
        raise DataError(f"model expects {len(model.column_names)} columns, got {x.shape[1]}")
    acc = np.zeros(x.shape[0])
    for tree in model.trees:
        acc += tree.predict(x)
    return acc / len(model.trees)
