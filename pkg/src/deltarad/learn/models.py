"""The five classifier families. Each exposes ``fit(X, y)``, ``predict(X)`` and ``importances()``.

Labels are 0/1 throughout. Every stochastic step draws from a generator
seeded with ``(seed, task index)`` so results do not depend on call order.
"""
from __future__ import annotations

import math

import numpy as np

from .tree import LEAF, grow_classifier, grow_regressor


def class_weights(y, mode) -> np.ndarray:
    """Per-sample weights; ``"balanced"`` gives each class total weight ``n / 2``."""
    y = np.asarray(y)
    if mode in (None, "none"):
        return np.ones(len(y))
    if mode != "balanced":
        raise ValueError(f"unknown class weighting {mode!r}")
    n = len(y)
    out = np.empty(n)
    for c in (0, 1):
        k = np.count_nonzero(y == c)
        out[y == c] = n / (2.0 * k) if k else 0.0
    return out


def sub_rng(seed, *index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, index)]))


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y differ in length")
    return X, y


def _normalize(imp):
    s = imp.sum()
    return imp / s if s > 0 else imp


class DecisionTree:
    family = "DT"

    def __init__(self, max_depth=None, min_samples_leaf=1, min_samples_split=2,
                 class_weight="balanced", seed=0):
        if max_depth is not None and max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        self.max_depth = max_depth
        self.min_samples_leaf = int(min_samples_leaf)
        self.min_samples_split = int(min_samples_split)
        self.class_weight = class_weight
        self.seed = seed

    def fit(self, X, y, sample_weight=None):
        X, y = _check_xy(X, y)
        w = class_weights(y, self.class_weight) if sample_weight is None else np.asarray(sample_weight, float)
        self.n_features_ = X.shape[1]
        self.tree_ = grow_classifier(X, y, w, self.max_depth, self.min_samples_leaf,
                                     self.min_samples_split)
        return self

    def predict(self, X):
        return (self.tree_.predict_value(X) > 0.5).astype(np.int64)

    def importances(self):
        return _normalize(self.tree_.importances(self.n_features_))


class RandomForest:
    family = "RF"

    def __init__(self, n_estimators=100, max_depth=None, min_samples_leaf=1, max_features="sqrt",
                 bootstrap=True, class_weight="balanced", seed=0):
        if n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        self.n_estimators = int(n_estimators)
        self.max_depth = max_depth
        self.min_samples_leaf = int(min_samples_leaf)
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.class_weight = class_weight
        self.seed = seed

    def _n_split_features(self, p):
        mf = self.max_features
        if mf in (None, "all"):
            return p
        if mf == "sqrt":
            return max(1, int(math.sqrt(p)))
        return max(1, min(int(mf), p))

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        n, p = X.shape
        self.n_features_ = p
        k = self._n_split_features(p)
        w = class_weights(y, self.class_weight)
        self.trees_ = []
        for t in range(self.n_estimators):
            rng = sub_rng(self.seed, t)
            rows = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            self.trees_.append(grow_classifier(X, y, w, self.max_depth, self.min_samples_leaf, 2,
                                               k, rng, rows=rows))
        return self

    def predict(self, X):
        votes = sum((t.predict_value(X) > 0.5).astype(np.int64) for t in self.trees_)
        # ties go to class 0
        return (2 * votes > len(self.trees_)).astype(np.int64)

    def importances(self):
        per_tree = [_normalize(t.importances(self.n_features_)) for t in self.trees_]
        return _normalize(np.mean(per_tree, axis=0))


class AdaBoost:
    """Binary SAMME over depth-limited trees."""

    family = "ADA"

    def __init__(self, n_estimators=50, base_depth=1, learning_rate=1.0, class_weight="balanced", seed=0):
        if n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        self.n_estimators = int(n_estimators)
        self.base_depth = int(base_depth)
        self.learning_rate = float(learning_rate)
        self.class_weight = class_weight
        self.seed = seed

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        self.n_features_ = X.shape[1]
        w = class_weights(y, self.class_weight)
        w = w / w.sum()
        self.prior_ = int(np.dot(w, y) > 0.5)
        self.trees_, self.alphas_, self.errors_ = [], [], []
        for _ in range(self.n_estimators):
            tree = grow_classifier(X, y, w, self.base_depth)
            miss = (tree.predict_value(X) > 0.5).astype(np.int64) != y
            err = float(np.dot(w, miss) / w.sum())
            if err >= 0.5:
                break
            alpha = self.learning_rate * math.log((1.0 - max(err, 1e-10)) / max(err, 1e-10))
            self.trees_.append(tree)
            self.alphas_.append(alpha)
            self.errors_.append(err)
            if err == 0.0:
                break
            w = w * np.exp(alpha * miss)
            w = w / w.sum()
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        score = np.zeros(X.shape[0])
        for a, t in zip(self.alphas_, self.trees_):
            score += a * np.where(t.predict_value(X) > 0.5, 1.0, -1.0)
        return score

    def predict(self, X):
        if not self.trees_:
            return np.full(np.asarray(X).shape[0], self.prior_, dtype=np.int64)
        return (self.decision_function(X) > 0).astype(np.int64)

    def importances(self):
        if not self.trees_:
            return np.zeros(self.n_features_)
        per_tree = np.array([_normalize(t.importances(self.n_features_)) for t in self.trees_])
        return _normalize(np.asarray(self.alphas_) @ per_tree)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def log_loss(y, margin, w):
    # log(1 + e^{-m}) for y=1 and log(1 + e^{m}) for y=0, computed stably
    s = np.where(y == 1, -margin, margin)
    return float(np.dot(w, np.logaddexp(0.0, s)) / w.sum())


class GradientBoostedTrees:
    """Additive logistic model built from second-order regression trees."""

    family = "GBT"

    def __init__(self, n_rounds=100, max_depth=3, learning_rate=0.1, reg_lambda=1.0,
                 min_child_weight=1.0, class_weight="balanced", seed=0):
        if n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        self.n_rounds = int(n_rounds)
        self.max_depth = int(max_depth)
        self.learning_rate = float(learning_rate)
        self.reg_lambda = float(reg_lambda)
        self.min_child_weight = float(min_child_weight)
        self.class_weight = class_weight
        self.seed = seed

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        self.n_features_ = X.shape[1]
        w = class_weights(y, self.class_weight)
        p0 = np.clip(np.dot(w, y) / w.sum(), 1e-6, 1 - 1e-6)
        self.base_ = float(math.log(p0 / (1 - p0)))
        margin = np.full(len(y), self.base_)
        self.trees_ = []
        self.loss_trace_ = [log_loss(y, margin, w)]
        for _ in range(self.n_rounds):
            p = _sigmoid(margin)
            g = w * (p - y)
            h = w * p * (1.0 - p)
            tree = grow_regressor(X, g, h, self.max_depth, self.reg_lambda, self.min_child_weight)
            margin = margin + self.learning_rate * tree.predict_value(X)
            self.trees_.append(tree)
            self.loss_trace_.append(log_loss(y, margin, w))
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        out = np.full(X.shape[0], self.base_)
        for t in self.trees_:
            out += self.learning_rate * t.predict_value(X)
        return out

    def predict_proba(self, X):
        return _sigmoid(self.decision_function(X))

    def predict(self, X):
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def importances(self):
        return _normalize(sum(t.importances(self.n_features_) for t in self.trees_))


class SVM:
    """Soft-margin SVM trained by SMO with maximal-violating-pair selection.

    Features are z-scored with training statistics. ``gamma="scale"`` means
    ``1 / (p * var)`` of the standardized training matrix.
    """

    family = "SVM"

    def __init__(self, C=1.0, kernel="rbf", gamma="scale", tol=1e-3, max_iter=100000,
                 class_weight="balanced", seed=0):
        if not C > 0:
            raise ValueError("C must be positive")
        if kernel not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {kernel!r}")
        self.C = float(C)
        self.kernel = kernel
        self.gamma = gamma
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.class_weight = class_weight
        self.seed = seed

    def _kernel(self, A, B):
        if self.kernel == "linear":
            return A @ B.T
        d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
        return np.exp(-self.gamma_ * np.maximum(d2, 0.0))

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        if len(np.unique(y)) < 2:
            raise ValueError("SVM needs both classes in the training labels")
        self.n_features_ = X.shape[1]
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        Z = (X - self.mean_) / self.scale_
        if self.gamma == "scale":
            v = Z.var()
            self.gamma_ = 1.0 / (Z.shape[1] * v) if v > 0 else 1.0
        else:
            self.gamma_ = float(self.gamma)
        s = np.where(y == 1, 1.0, -1.0)
        cw = class_weights(y, self.class_weight)
        Cb = self.C * cw
        Q = (s[:, None] * s[None, :]) * self._kernel(Z, Z)
        alpha, rho, trace, iters = _smo(Q, s, Cb, self.tol, self.max_iter)
        sv = alpha > 0
        self.support_ = Z[sv]
        self.coef_ = alpha[sv] * s[sv]
        self.rho_ = rho
        self.alpha_ = alpha
        self.dual_trace_ = trace
        self.iterations_ = iters
        self.box_ = Cb
        self.labels_pm_ = s
        return self

    def decision_function(self, X):
        Z = (np.asarray(X, dtype=np.float64) - self.mean_) / self.scale_
        if len(self.coef_) == 0:
            return np.full(Z.shape[0], -self.rho_)
        return self._kernel(Z, self.support_) @ self.coef_ - self.rho_

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.int64)

    def importances(self):
        if self.kernel != "linear":
            raise ValueError("feature importance is undefined for an RBF-kernel SVM")
        w = self.coef_ @ self.support_ if len(self.coef_) else np.zeros(self.n_features_)
        return _normalize(np.abs(w))


def _smo(Q, y, C, tol, max_iter):
    """Minimise ``0.5 a'Qa - e'a`` s.t. ``0 <= a_i <= C_i`` and ``y'a = 0``.

    Returns ``(alpha, rho, dual objective trace, iterations)``; the trace
    holds ``-f(alpha)`` after every update and is non-decreasing.
    """
    n = len(y)
    alpha = np.zeros(n)
    G = -np.ones(n)
    trace = [0.0]
    it = 0
    while it < max_iter:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * G
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        j = int(np.flatnonzero(low)[np.argmin(score[low])])
        if score[i] - score[j] <= tol:
            break
        it += 1
        old_i, old_j = alpha[i], alpha[j]
        Ci, Cj = C[i], C[j]
        if y[i] != y[j]:
            quad = max(Q[i, i] + Q[j, j] + 2 * Q[i, j], 1e-12)
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            ai, aj = alpha[i] + delta, alpha[j] + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > Ci - Cj:
                if ai > Ci:
                    ai, aj = Ci, Ci - diff
            elif aj > Cj:
                aj, ai = Cj, Cj + diff
        else:
            quad = max(Q[i, i] + Q[j, j] - 2 * Q[i, j], 1e-12)
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            ai, aj = alpha[i] - delta, alpha[j] + delta
            if total > Ci:
                if ai > Ci:
                    ai, aj = Ci, total - Ci
            elif aj < 0:
                aj, ai = 0.0, total
            if total > Cj:
                if aj > Cj:
                    aj, ai = Cj, total - Cj
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += Q[:, i] * (ai - old_i) + Q[:, j] * (aj - old_j)
        trace.append(float(-0.5 * np.dot(alpha, G - 1.0)))
    # rho: average over free vectors, else midpoint of the feasible interval
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(np.mean(yG[free]))
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        ub = np.min(yG[up]) if up.any() else np.inf
        lb = np.max(yG[low]) if low.any() else -np.inf
        rho = float((ub + lb) / 2) if np.isfinite(ub) and np.isfinite(lb) else float(ub if np.isfinite(ub) else lb)
    return alpha, rho, trace, it


FAMILIES = {"DT": DecisionTree, "RF": RandomForest, "ADA": AdaBoost, "GBT": GradientBoostedTrees, "SVM": SVM}
