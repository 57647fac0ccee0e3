"""Seeded random search over discrete grids, scored by mean macro-F1 over stratified folds."""
from __future__ import annotations

import inspect
from dataclasses import dataclass

import numpy as np

from .data import Dataset, kfold_stratified
from .metrics import macro_f1
from .models import FAMILIES, sub_rng

DEFAULT_SPACES = {
    "DT": {"max_depth": list(range(2, 21))},
    "RF": {"n_estimators": [100, 200, 300, 400, 500], "max_depth": list(range(3, 21))},
    "ADA": {"n_estimators": list(range(50, 401)), "learning_rate": [0.1, 0.5, 1.0]},
    "GBT": {"n_rounds": list(range(50, 401)), "learning_rate": [0.05, 0.1, 0.3], "reg_lambda": [0.0, 1.0, 10.0]},
    "SVM": {"C": [0.1, 1.0, 10.0, 100.0], "gamma": ["scale", 0.01, 0.1]},
}
DEFAULT_N_ITER = 25


@dataclass(frozen=True)
class CVRow:
    draw: int
    params: dict
    fold_scores: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_scores))


@dataclass(frozen=True)
class SearchResult:
    family: str
    best_params: dict
    best_score: float
    table: tuple[CVRow, ...]


def check_space(family: str, space: dict) -> None:
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}")
    allowed = set(inspect.signature(FAMILIES[family]).parameters) - {"seed"}
    bad = sorted(set(space) - allowed)
    if bad:
        raise ValueError(f"parameters {bad} do not belong to family {family}")
    for k, vals in space.items():
        if len(vals) == 0:
            raise ValueError(f"empty value list for {k}")


def sample_configs(space: dict, n_iter: int, seed: int) -> list[dict]:
    """Draw ``n_iter`` distinct grid points (fewer if the grid is smaller)."""
    keys = sorted(space)
    sizes = [len(space[k]) for k in keys]
    total = int(np.prod(sizes))
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_iter, total), replace=False)
    out = []
    for flat in picks.tolist():
        idx = np.unravel_index(flat, sizes)
        out.append({k: space[k][i] for k, i in zip(keys, idx)})
    return out


def cross_val_scores(family, params, d: Dataset, k: int, seed: int, draw: int = 0) -> tuple[float, ...]:
    scores = []
    for f, split in enumerate(kfold_stratified(d, k, seed)):
        s = int(sub_rng(seed, draw, f).integers(2**31))
        est = FAMILIES[family](**params, seed=s).fit(d.X[split.train], d.y[split.train])
        scores.append(macro_f1(est.predict(d.X[split.test]), d.y[split.test]))
    return tuple(scores)


def random_search(family: str, d: Dataset, space: dict | None = None, n_iter: int = DEFAULT_N_ITER,
                  k: int = 5, seed: int = 0) -> SearchResult:
    """Best configuration by mean CV macro-F1; the earliest draw wins ties."""
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    space = DEFAULT_SPACES[family] if space is None else space
    check_space(family, space)
    rows = []
    best, best_score = None, -np.inf
    for i, params in enumerate(sample_configs(space, n_iter, seed)):
        row = CVRow(i, params, cross_val_scores(family, params, d, k, seed, i))
        rows.append(row)
        if row.mean > best_score:
            best, best_score = params, row.mean
    return SearchResult(family, best, float(best_score), tuple(rows))

