"""Rigid multimodal registration and registration-quality metrics.

The fixed image is the MRI, the moving image the CT. A returned transform
maps moving-space world coordinates onto fixed-space world coordinates, so
``apply_transform(moving, result.transform, fixed.geometry)`` overlays the
moving image on the fixed grid.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import kernels
from .volgrid import (
    BinaryMask,
    Geometry,
    RigidTransform,
    Volume,
    _check_match,
    grid_points,
    sample_with_affine,
    voxel_to_world,
    world_to_voxel,
)

log = logging.getLogger(__name__)


def invert(t: RigidTransform) -> RigidTransform:
    rot_t = t.rotation.T
    return RigidTransform.from_rotation_translation(rot_t, -rot_t @ t.translation)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform mapping ``p`` to ``a(b(p))``."""
    m = a.matrix @ b.matrix
    m[3] = (0.0, 0.0, 0.0, 1.0)
    return RigidTransform(m)


def apply_transform(moving: Volume, t: RigidTransform, target: Geometry,
                    interp: str = "trilinear", fill: float = 0.0) -> Volume:
    """Resample ``moving`` onto ``target``; the voxel at world ``w`` reads ``moving`` at ``t^-1(w)``."""
    index_map = moving.geometry.inverse_affine @ invert(t).matrix @ target.affine
    out = sample_with_affine(moving.array, index_map, target.dims, interp, fill)
    return Volume(target, out, moving.unit)


def transform_mask(m: BinaryMask, t: RigidTransform, target: Geometry) -> BinaryMask:
    index_map = m.geometry.inverse_affine @ invert(t).matrix @ target.affine
    out = sample_with_affine(m.bits.astype(np.float64), index_map, target.dims, "nearest", 0.0)
    return BinaryMask(target, out > 0.5)


def _bin_indices(x: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    scaled = (x - lo) / (hi - lo)
    return np.clip((scaled * bins).astype(np.int64), 0, bins - 1)


def _mi_from_bins(ia: np.ndarray, ib: np.ndarray, bins: int) -> float:
    joint = np.bincount(ia * bins + ib, minlength=bins * bins).reshape(bins, bins)
    p = joint / joint.sum()
    pa = p.sum(axis=1)
    pb = p.sum(axis=0)
    nz = p > 0
    outer = pa[:, None] * pb[None, :]
    return float(max(np.sum(p[nz] * np.log(p[nz] / outer[nz])), 0.0))


def mutual_information(a: Volume, b: Volume, bins: int = 32) -> float:
    """Mutual information (nats) of the joint histogram of min-max normalised intensities.

    Either image being constant gives 0.
    """
    _check_match(a.geometry, b.geometry, "MI images")
    if bins < 8:
        raise ValueError("mutual information needs at least 8 bins")
    return _mi_arrays(a.array.ravel(), b.array.ravel(), bins)


def _mi_arrays(x: np.ndarray, y: np.ndarray, bins: int) -> float:
    xlo, xhi = float(x.min()), float(x.max())
    ylo, yhi = float(y.min()), float(y.max())
    if xhi <= xlo or yhi <= ylo:
        return 0.0
    return _mi_from_bins(_bin_indices(x, xlo, xhi, bins), _bin_indices(y, ylo, yhi, bins), bins)


def dice(a: BinaryMask, b: BinaryMask) -> float:
    _check_match(a.geometry, b.geometry, "Dice masks")
    total = int(a.bits.sum()) + int(b.bits.sum())
    if total == 0:
        raise ValueError("Dice is undefined for two empty masks")
    return 2.0 * int(np.logical_and(a.bits, b.bits).sum()) / total


def euler_matrix(rx: float, ry: float, rz: float) -> np.ndarray:
    """Rotation ``Rz @ Ry @ Rx`` for angles in radians."""
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    rot_x = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    rot_y = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rot_z = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rot_z @ rot_y @ rot_x


@dataclass(frozen=True)
class RigidParams:
    rotations: tuple[float, float, float] = (0.0, 0.0, 0.0)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not np.all(np.isfinite(self.rotations + self.translation + self.center)):
            raise ValueError("rigid parameters must be finite")

    def to_transform(self) -> RigidTransform:
        """``x -> R (x - c) + c + t``."""
        rot = euler_matrix(*self.rotations)
        c = np.asarray(self.center, dtype=np.float64)
        return RigidTransform.from_rotation_translation(rot, c + np.asarray(self.translation) - rot @ c)

    @classmethod
    def from_vector(cls, vec, center) -> "RigidParams":
        vec = [float(v) for v in vec]
        return cls(tuple(vec[:3]), tuple(vec[3:]), tuple(float(c) for c in center))


@dataclass(frozen=True)
class RegistrationConfig:
    """Optimiser settings.

    ``rotation_step`` is in radians and ``translation_step`` in multiples of the
    level's voxel spacing; steps halve until they drop below ``tolerance`` times
    their starting size. ``max_iterations`` caps coordinate sweeps over all levels.
    """

    bins: int = 32
    rotation_step: float = 0.02
    translation_step: float = 1.0
    max_iterations: int = 200
    tolerance: float = 0.01
    pyramid: tuple[int, ...] = (4, 2, 1)
    sampling_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "pyramid", tuple(int(f) for f in self.pyramid))
        if self.bins < 8:
            raise ValueError("bins must be >= 8")
        if not self.pyramid or min(self.pyramid) < 1 or self.pyramid[-1] != 1:
            raise ValueError("pyramid factors must be >= 1 and end at 1")
        if any(a < b for a, b in zip(self.pyramid, self.pyramid[1:])):
            raise ValueError("pyramid factors must be non-increasing")
        if not 0.0 < self.sampling_fraction <= 1.0:
            raise ValueError("sampling_fraction must lie in (0, 1]")
        if self.rotation_step <= 0 or self.translation_step <= 0:
            raise ValueError("optimizer steps must be positive")
        if not 0.0 < self.tolerance < 1.0:
            raise ValueError("tolerance must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class RegistrationResult:
    transform: RigidTransform
    metric: float
    iterations: int
    converged: bool
    identity_metric: float = 0.0
    params: RigidParams = field(default_factory=RigidParams)


def _downsample(v: Volume, factor: int) -> Volume:
    if factor == 1:
        return v
    g = v.geometry
    smoothed = ndimage.gaussian_filter(v.array, sigma=0.5 * factor, mode="nearest")
    dims = tuple(max(1, int(np.ceil(d / factor))) for d in g.dims)
    spacing = tuple(s * factor for s in g.spacing)
    # keep the physical centre of the first coarse voxel over the first block
    shift = np.full(3, (factor - 1) / 2.0)
    origin = tuple(voxel_to_world(g, shift))
    coarse = Geometry(dims, spacing, origin, g.direction)
    index_map = g.inverse_affine @ coarse.affine
    return Volume(coarse, sample_with_affine(smoothed, index_map, dims, "trilinear", 0.0), v.unit)


class _MetricEvaluator:
    """MI between fixed samples and the moving image pulled through a candidate transform."""

    def __init__(self, fixed: Volume, moving: Volume, bins: int, fraction: float, rng):
        pts = grid_points(fixed.geometry.dims)
        n = pts.shape[0]
        k = max(1, int(round(fraction * n)))
        if k < n:
            pts = pts[np.sort(rng.choice(n, size=k, replace=False))]
        self.world = voxel_to_world(fixed.geometry, pts)
        fvals = fixed.array.ravel()[np.ravel_multi_index(pts.T.astype(np.int64), fixed.geometry.dims)]
        flo, fhi = float(fvals.min()), float(fvals.max())
        if fhi <= flo:
            raise ValueError("fixed image is constant over the sampled voxels")
        self.fixed_bins = _bin_indices(fvals, flo, fhi, bins)
        self.moving = np.ascontiguousarray(moving.array)
        self.moving_geom = moving.geometry
        self.mlo, self.mhi = float(moving.array.min()), float(moving.array.max())
        if self.mhi <= self.mlo:
            raise ValueError("moving image is constant")
        self.bins = bins
        self.min_overlap = max(1, int(0.1 * len(fvals)))

    def __call__(self, t: RigidTransform) -> float:
        inv = invert(t)
        mw = self.world @ inv.rotation.T + inv.translation
        mv = world_to_voxel(self.moving_geom, mw)
        vals = kernels.sample_points(self.moving, mv, 1, np.nan)
        ok = ~np.isnan(vals)
        if ok.sum() < self.min_overlap:
            return 0.0
        mb = _bin_indices(vals[ok], self.mlo, self.mhi, self.bins)
        return _mi_from_bins(self.fixed_bins[ok], mb, self.bins)


def _coordinate_descent(evaluate, center, start, steps, min_steps, budget):
    """Maximise ``evaluate`` by per-parameter line search with step halving."""
    p = np.array(start, dtype=np.float64)
    steps = np.array(steps, dtype=np.float64)

    def score(vec):
        val = evaluate(RigidParams.from_vector(vec, center).to_transform())
        if not np.isfinite(val):
            raise RuntimeError(f"non-finite similarity {val!r} at parameters {vec.tolist()}")
        return val

    best = score(p)
    sweeps = 0
    converged = False
    while sweeps < budget:
        sweeps += 1
        for i in range(p.size):
            if steps[i] < min_steps[i]:
                continue
            moved = False
            for sign in (1.0, -1.0):
                trial = p.copy()
                trial[i] += sign * steps[i]
                val = score(trial)
                if val > best:
                    p, best, moved = trial, val, True
                    while True:
                        trial = p.copy()
                        trial[i] += sign * steps[i]
                        val = score(trial)
                        if val <= best:
                            break
                        p, best = trial, val
                    break
            if not moved:
                steps[i] *= 0.5
        if np.all(steps < min_steps):
            converged = True
            break
    return p, best, sweeps, converged


def register_rigid(fixed: Volume, moving: Volume, cfg: RegistrationConfig | None = None) -> RegistrationResult:
    """Coarse-to-fine rigid registration maximising mutual information.

    Never returns a transform scoring below the identity on the finest level.
    """
    cfg = cfg or RegistrationConfig()
    if np.ptp(fixed.array) == 0 or np.ptp(moving.array) == 0:
        raise ValueError("registration requires non-constant fixed and moving images")
    rng = np.random.default_rng(cfg.seed)
    center = fixed.geometry.center
    p = np.zeros(6)
    total_sweeps = 0
    converged = False
    identity_metric = 0.0
    best = 0.0
    for level, factor in enumerate(cfg.pyramid):
        f_lvl = _downsample(fixed, factor)
        m_lvl = _downsample(moving, factor)
        evaluate = _MetricEvaluator(f_lvl, m_lvl, cfg.bins, cfg.sampling_fraction, rng)
        unit = min(f_lvl.geometry.spacing)
        steps = np.array([cfg.rotation_step * factor] * 3 + [cfg.translation_step * unit] * 3)
        min_steps = steps * cfg.tolerance
        last = level == len(cfg.pyramid) - 1
        if last:
            identity_metric = evaluate(RigidTransform.identity())
            carried = evaluate(RigidParams.from_vector(p, center).to_transform())
            if carried < identity_metric:
                p = np.zeros(6)
        budget = max(1, cfg.max_iterations - total_sweeps) if last else max(
            1, (cfg.max_iterations - total_sweeps) // (len(cfg.pyramid) - level))
        p, best, sweeps, converged = _coordinate_descent(evaluate, center, p, steps, min_steps, budget)
        total_sweeps += sweeps
        log.debug("level factor=%d metric=%.6f sweeps=%d params=%s", factor, best, sweeps, p.tolist())
    params = RigidParams.from_vector(p, center)
    return RegistrationResult(params.to_transform(), float(best), total_sweeps, converged,
                              float(identity_metric), params)


def read_transform(path) -> RigidTransform:
    """Read 16 whitespace-separated numbers (row-major 4x4); ``#`` starts a comment."""
    text = Path(path).read_text()
    nums = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        nums.extend(float(tok) for tok in line.split())
    if len(nums) != 16:
        raise ValueError(f"{path}: expected 16 numbers, found {len(nums)}")
    return RigidTransform(np.array(nums).reshape(4, 4))


def write_transform(t: RigidTransform, path, header: str = "") -> None:
    lines = [f"# {line}" for line in header.splitlines()] if header else []
    for row in t.matrix:
        lines.append(" ".join(repr(float(x)) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")
