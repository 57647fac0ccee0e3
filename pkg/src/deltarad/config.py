"""Pipeline configuration: one JSON document, validated and hashed."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .learn.models import FAMILIES
from .learn.search import DEFAULT_N_ITER, DEFAULT_SPACES, check_space
from .preprocess import ClaheSpec, WindowSpec
from .radiomics import DiscretizationConfig
from .registration import RegistrationConfig

DEFAULTS = {
    "seed": 0,
    "paths": {"patients": "patients.csv", "lesions": "lesions.csv", "images": "images.csv", "output": "out"},
    "preprocess": {
        "window": {"level": 40.0, "width": 80.0},
        "clahe": {"tiles": [8, 8], "clip_limit": 2.0, "bins": 256},
        "median_radius": 1,
    },
    "registration": {"bins": 32, "rotation_step": 0.02, "translation_step": 1.0, "max_iterations": 200,
                     "tolerance": 0.01, "pyramid": [4, 2, 1], "sampling_fraction": 0.25},
    "dosimetry": {"factor": 1.5},
    "radiomics": {"mode": "fixed_count", "bins": 32, "bin_width": 25.0, "distance": 1},
    "models": {"families": ["DT", "RF", "ADA", "GBT", "SVM"], "n_iter": DEFAULT_N_ITER, "k": 5, "spaces": {}},
    "split": {"mode": "case", "fraction": 0.2},
    "cohort": {"histogram_bin_months": 1.0},
}


class ConfigError(ValueError):
    """Raised with the dotted name of the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"config field '{field_name}': {message}")
        self.field = field_name


def _merge(base, override, prefix=""):
    out = copy.deepcopy(base)
    for k, v in override.items():
        name = f"{prefix}{k}"
        if k not in base:
            raise ConfigError(name, "unknown field")
        if isinstance(base[k], dict) and k != "spaces":
            if not isinstance(v, dict):
                raise ConfigError(name, "expected an object")
            out[k] = _merge(base[k], v, name + ".")
        else:
            out[k] = v
    return out


def config_hash(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class PipelineConfig:
    doc: dict
    base_dir: Path

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    @property
    def hash(self) -> str:
        return config_hash(self.doc)

    @property
    def stamp(self) -> str:
        return f"deltarad config_hash={self.hash} seed={self.seed}"

    def path(self, key: str) -> Path:
        return (self.base_dir / self.doc["paths"][key]).resolve()

    @property
    def output(self) -> Path:
        return self.path("output")

    @property
    def window(self) -> WindowSpec:
        return WindowSpec(**self.doc["preprocess"]["window"])

    @property
    def clahe(self) -> ClaheSpec:
        c = self.doc["preprocess"]["clahe"]
        return ClaheSpec(tuple(c["tiles"]), c["clip_limit"], c["bins"])

    @property
    def registration(self) -> RegistrationConfig:
        r = dict(self.doc["registration"])
        r["pyramid"] = tuple(r["pyramid"])
        return RegistrationConfig(**r, seed=self.seed)

    @property
    def discretization(self) -> DiscretizationConfig:
        r = self.doc["radiomics"]
        return DiscretizationConfig(r["mode"], r["bins"], r["bin_width"])

    def space(self, family: str) -> dict:
        return self.doc["models"]["spaces"].get(family, DEFAULT_SPACES[family])


def _validate(cfg: PipelineConfig, require_inputs: bool) -> None:
    d = cfg.doc
    if not isinstance(d["seed"], int) or isinstance(d["seed"], bool) or d["seed"] < 0:
        raise ConfigError("seed", "must be a non-negative integer")
    checks = [("preprocess.window", lambda: cfg.window), ("preprocess.clahe", lambda: cfg.clahe),
              ("registration", lambda: cfg.registration), ("radiomics", lambda: cfg.discretization)]
    for name, make in checks:
        try:
            make()
        except (TypeError, ValueError) as exc:
            raise ConfigError(name, str(exc)) from exc
    if int(d["preprocess"]["median_radius"]) < 1:
        raise ConfigError("preprocess.median_radius", "must be >= 1")
    if not float(d["dosimetry"]["factor"]) > 1:
        raise ConfigError("dosimetry.factor", "must exceed 1")
    if int(d["radiomics"]["distance"]) < 1:
        raise ConfigError("radiomics.distance", "must be >= 1")
    if not 0 < float(d["split"]["fraction"]) < 1:
        raise ConfigError("split.fraction", "must lie in (0, 1)")
    if d["split"]["mode"] not in ("case", "patient"):
        raise ConfigError("split.mode", "must be 'case' or 'patient'")
    m = d["models"]
    bad = [f for f in m["families"] if f not in FAMILIES]
    if bad or not m["families"]:
        raise ConfigError("models.families", f"unknown or empty families {bad}")
    if int(m["n_iter"]) < 1:
        raise ConfigError("models.n_iter", "must be >= 1")
    if int(m["k"]) < 2:
        raise ConfigError("models.k", "must be >= 2")
    for fam, space in m["spaces"].items():
        try:
            check_space(fam, space)
        except ValueError as exc:
            raise ConfigError(f"models.spaces.{fam}", str(exc)) from exc
    if not float(d["cohort"]["histogram_bin_months"]) > 0:
        raise ConfigError("cohort.histogram_bin_months", "must be positive")
    if require_inputs:
        for key in ("patients", "lesions", "images"):
            if not cfg.path(key).is_file():
                raise ConfigError(f"paths.{key}", f"file not found: {cfg.path(key)}")


def load_config(path, require_inputs: bool = True) -> PipelineConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    cfg = PipelineConfig(_merge(DEFAULTS, raw), path.parent.resolve())
    _validate(cfg, require_inputs)
    return cfg
