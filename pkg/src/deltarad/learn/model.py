"""Fitted-model container: schema-checked prediction, importances and a versioned file format."""
from __future__ import annotations

import io
import pickle
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import FAMILIES

MAGIC = b"DRADMODL"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainedModel:
    family: str
    params: dict
    estimator: object
    columns: tuple[str, ...]
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")


def train(family: str, X, y, columns, params=None, seed: int = 0, meta=None) -> TrainedModel:
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}; expected one of {sorted(FAMILIES)}")
    params = dict(params or {})
    est = FAMILIES[family](**params, seed=seed).fit(np.asarray(X, dtype=np.float64), np.asarray(y))
    return TrainedModel(family, params, est, tuple(columns), int(seed), dict(meta or {}))


def predict(m: TrainedModel, X, columns) -> np.ndarray:
    """Labels in {0, 1}; ``columns`` must equal the training schema, order included."""
    columns = tuple(columns)
    if columns != m.columns:
        missing = [c for c in m.columns if c not in columns]
        extra = [c for c in columns if c not in m.columns]
        detail = f"missing {missing}, unexpected {extra}" if missing or extra else "column order differs"
        raise ValueError(f"feature schema mismatch: {detail}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(columns):
        raise ValueError("row width does not match the schema")
    return m.estimator.predict(X)


def feature_importances(m: TrainedModel, top_k: int = 8) -> list[tuple[str, float]]:
    """Top-k (name, weight) by normalized importance; ties ordered by name."""
    imp = np.asarray(m.estimator.importances(), dtype=np.float64)
    ranked = sorted(zip(m.columns, imp.tolist()), key=lambda t: (-t[1], t[0]))
    return ranked[:top_k]


def save_model(m: TrainedModel, path) -> None:
    buf = io.BytesIO()
    pickle.dump({"family": m.family, "params": m.params, "estimator": m.estimator,
                 "columns": list(m.columns), "seed": m.seed, "meta": m.meta}, buf, protocol=4)
    Path(path).write_bytes(MAGIC + FORMAT_VERSION.to_bytes(2, "little") + buf.getvalue())


def load_model(path) -> TrainedModel:
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a model file")
    ver = int.from_bytes(raw[len(MAGIC):len(MAGIC) + 2], "little")
    if ver != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format version {ver}")
    d = pickle.loads(raw[len(MAGIC) + 2:])
    return TrainedModel(d["family"], d["params"], d["estimator"], tuple(d["columns"]), d["seed"], d.get("meta", {}))
