"""Case-level datasets, stratified train/test splits and stratified k-fold."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """One row per case (metastasis); ``groups`` holds the owning patient id."""

    X: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...]
    groups: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64).ravel()
        if X.ndim != 2:
            raise ValueError("X must be 2-D")
        cols = tuple(str(c) for c in self.columns)
        if X.shape[1] != len(cols):
            raise ValueError(f"{X.shape[1]} feature columns but {len(cols)} names")
        if len(set(cols)) != len(cols):
            raise ValueError("column names must be unique")
        if X.shape[0] != y.shape[0]:
            raise ValueError("row count differs from label count")
        if not np.all(np.isfinite(X)):
            raise ValueError("dataset contains NaN or infinite cells")
        if not set(np.unique(y).tolist()) <= {0, 1}:
            raise ValueError("labels must be 0 or 1")
        groups = tuple(str(i) for i in range(len(y))) if self.groups is None else tuple(map(str, self.groups))
        if len(groups) != len(y):
            raise ValueError("row count differs from group count")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "groups", groups)

    def __len__(self):
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.columns, tuple(self.groups[i] for i in idx))


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray


def _quota(class_sizes, total):
    """Largest-remainder apportionment of ``total`` across classes."""
    n = sum(class_sizes)
    exact = [s * total / n for s in class_sizes]
    base = [math.floor(e) for e in exact]
    left = total - sum(base)
    order = sorted(range(len(exact)), key=lambda c: (-(exact[c] - base[c]), c))
    for c in order[:left]:
        base[c] += 1
    return base


def _check_fraction(fraction):
    if not 0 < fraction < 1:
        raise ValueError(f"test fraction must lie in (0, 1), got {fraction}")


def stratified_split(d: Dataset, fraction: float = 0.2, seed: int = 0, grouped: bool = False) -> SplitIndices:
    """Seeded per-class partition with ``ceil(n * fraction)`` test cases.

    In grouped mode whole patients go to one side; class balance then holds
    only approximately.
    """
    _check_fraction(fraction)
    y = d.y
    counts = [int(np.sum(y == c)) for c in (0, 1)]
    present = [c for c in (0, 1) if counts[c] > 0]
    if any(counts[c] < 2 for c in present):
        raise ValueError(f"each class needs at least 2 cases, got counts {counts}")
    rng = np.random.default_rng(seed)
    n_test = math.ceil(len(y) * fraction)
    quota = _quota(counts, n_test)
    if grouped:
        return _grouped_split(d, quota, rng)
    test = []
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        q = min(max(quota[c], 1 if counts[c] else 0), counts[c] - 1) if counts[c] else 0
        test.extend(idx[rng.permutation(len(idx))[:q]].tolist())
    test = np.sort(np.asarray(test, dtype=np.int64))
    train = np.setdiff1d(np.arange(len(y)), test)
    return SplitIndices(train, test)


def _grouped_split(d: Dataset, quota, rng) -> SplitIndices:
    names = sorted(set(d.groups))
    members = {g: [] for g in names}
    for i, g in enumerate(d.groups):
        members[g].append(i)
    order = [names[i] for i in rng.permutation(len(names))]
    taken = [0, 0]
    test = []
    for g in order:
        rows = members[g]
        add = [int(np.sum(d.y[rows] == c)) for c in (0, 1)]
        if all(taken[c] + add[c] <= quota[c] for c in (0, 1)):
            test.extend(rows)
            taken = [taken[c] + add[c] for c in (0, 1)]
    test = np.sort(np.asarray(test, dtype=np.int64))
    return SplitIndices(np.setdiff1d(np.arange(len(d.y)), test), test)


def kfold_stratified(d: Dataset, k: int = 5, seed: int = 0) -> list[SplitIndices]:
    """Deal class-shuffled indices round-robin so per-fold class counts differ by at most one."""
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(d.y), dtype=np.int64)
    pos = 0
    for c in (0, 1):
        idx = np.flatnonzero(d.y == c)
        if 0 < len(idx) < k:
            raise ValueError(f"class {c} has {len(idx)} cases, fewer than k={k}")
        idx = idx[rng.permutation(len(idx))]
        fold_of[idx] = (pos + np.arange(len(idx))) % k
        pos += len(idx)
    all_idx = np.arange(len(d.y))
    return [SplitIndices(all_idx[fold_of != f], all_idx[fold_of == f]) for f in range(k)]
