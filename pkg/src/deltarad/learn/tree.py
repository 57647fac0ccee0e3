"""Axis-aligned binary trees: Gini classification trees and second-order regression trees."""
from __future__ import annotations

import numpy as np

from .. import kernels

LEAF = -1


class Tree:
    """Flat node arrays; ``value`` is P(class 1) for classifiers and the leaf weight for boosting."""

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []
        self.gain = []

    def _add(self, value):
        self.feature.append(LEAF)
        self.threshold.append(np.nan)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(float(value))
        self.gain.append(0.0)
        return len(self.value) - 1

    def _freeze(self):
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=np.float64)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.value = np.asarray(self.value, dtype=np.float64)
        self.gain = np.asarray(self.gain, dtype=np.float64)
        return self

    @property
    def n_nodes(self) -> int:
        return len(self.value)

    @property
    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):  # children always follow their parent
            if self.left[i] != LEAF:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def apply(self, X) -> np.ndarray:
        """Leaf index per row; a row goes left when ``x[feature] <= threshold``."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.left[node] != LEAF)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.left[node[active]] != LEAF]
        return node

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def importances(self, n_features: int) -> np.ndarray:
        imp = np.zeros(n_features)
        split = self.feature != LEAF
        np.add.at(imp, self.feature[split], np.maximum(self.gain[split], 0.0))
        return imp


def _feature_subset(p, max_features, rng):
    if max_features is None or max_features >= p:
        return np.arange(p, dtype=np.int64)
    return np.sort(rng.choice(p, size=max_features, replace=False)).astype(np.int64)


def grow_classifier(X, y, w, max_depth=None, min_samples_leaf=1, min_samples_split=2,
                    max_features=None, rng=None, rows=None) -> Tree:
    """Greedy CART on weighted Gini impurity.

    Splits with zero impurity decrease are still taken (XOR needs one), so
    growth stops only at purity, the depth or size limits, or when every
    candidate feature is constant on the node.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    yf = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    rows = np.arange(X.shape[0], dtype=np.int64) if rows is None else np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("cannot grow a tree on an empty training set")
    p = X.shape[1]
    tree = Tree()
    stack = [(rows, 0, None, False)]
    while stack:
        r, depth, parent, is_right = stack.pop()
        wt = w[r].sum()
        w1 = float(np.dot(w[r], yf[r]))
        node = tree._add(w1 / wt if wt > 0 else 0.0)
        if parent is not None:
            (tree.right if is_right else tree.left)[parent] = node
        pure = bool(np.all(yf[r] == yf[r[0]]))
        if pure or (max_depth is not None and depth >= max_depth) or r.size < min_samples_split:
            continue
        feats = _feature_subset(p, max_features, rng)
        f, thr, gain = kernels.best_split_gini(X, yf, w, r, feats, min_samples_leaf)
        if f < 0 or gain < -1e-12 * wt:
            continue
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.gain[node] = gain
        go_left = X[r, f] <= thr
        stack.append((r[~go_left], depth + 1, node, True))
        stack.append((r[go_left], depth + 1, node, False))
    return tree._freeze()


def grow_regressor(X, g, h, max_depth, reg_lambda, min_child_weight=1.0, min_samples_leaf=1) -> Tree:
    """Second-order regression tree with leaf weight ``-G/(H+λ)``; only positive-gain splits."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    p = X.shape[1]
    feats = np.arange(p, dtype=np.int64)
    tree = Tree()
    stack = [(np.arange(X.shape[0], dtype=np.int64), 0, None, False)]
    while stack:
        r, depth, parent, is_right = stack.pop()
        G, H = g[r].sum(), h[r].sum()
        node = tree._add(-G / (H + reg_lambda) if H + reg_lambda > 0 else 0.0)
        if parent is not None:
            (tree.right if is_right else tree.left)[parent] = node
        if depth >= max_depth:
            continue
        f, thr, gain = kernels.best_split_newton(X, g, h, r, feats, float(reg_lambda),
                                                 float(min_child_weight), min_samples_leaf)
        if f < 0 or not gain > 0:
            continue
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.gain[node] = gain
        go_left = X[r, f] <= thr
        stack.append((r[~go_left], depth + 1, node, True))
        stack.append((r[go_left], depth + 1, node, False))
    return tree._freeze()
