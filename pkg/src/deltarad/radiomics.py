"""Radiomic features (first-order, shape, GLCM, GLRLM) and delta features.

Every (volume, mask) pair yields the same 34 named features in a fixed order.
Degenerate regions (constant intensity, single voxels) follow fixed
conventions instead of producing NaN.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial import ConvexHull, QhullError
from skimage import measure

from . import kernels
from .volgrid import BinaryMask, Volume, _check_match, voxel_to_world

EXTRACTOR_VERSION = "1"

FIRST_ORDER = ("mean", "median", "minimum", "maximum", "range", "variance", "std", "skewness",
               "kurtosis", "energy", "rms", "entropy", "p10", "p90", "iqr", "mad")
SHAPE = ("volume_cc", "surface_area_cm2", "surface_volume_ratio", "sphericity",
         "max_diameter_mm", "elongation", "flatness")
GLCM = ("contrast", "dissimilarity", "joint_energy", "joint_entropy", "homogeneity", "correlation")
GLRLM = ("sre", "lre", "gln", "rln", "run_percentage")

FEATURE_NAMES = (tuple(f"first_order.{n}" for n in FIRST_ORDER)
                 + tuple(f"shape.{n}" for n in SHAPE)
                 + tuple(f"glcm.{n}" for n in GLCM)
                 + tuple(f"glrlm.{n}" for n in GLRLM))

# one representative of each +/- pair of 26-neighbour offsets
DIRECTIONS_13 = np.array([
    (1, 0, 0), (0, 1, 0), (0, 0, 1),
    (1, 1, 0), (1, -1, 0), (1, 0, 1), (1, 0, -1), (0, 1, 1), (0, 1, -1),
    (1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1),
], dtype=np.int64)

ENTROPY_BINS = 64
MESH_SMOOTHING_ITERATIONS = 10


@dataclass(frozen=True)
class DiscretizationConfig:
    mode: str = "fixed_count"
    bins: int = 32
    bin_width: float = 25.0

    def __post_init__(self):
        if self.mode == "fixed_count":
            if self.bins < 2:
                raise ValueError("fixed_count discretisation needs bins >= 2")
        elif self.mode == "fixed_width":
            if not self.bin_width > 0:
                raise ValueError("fixed_width discretisation needs bin_width > 0")
        else:
            raise ValueError(f"unknown discretisation mode {self.mode!r}")


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        names = tuple(self.names)
        vals = np.array(self.values, dtype=np.float64).ravel()
        if len(names) != len(vals):
            raise ValueError("feature names and values differ in length")
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        if any("." not in n for n in names):
            raise ValueError("feature names must look like 'family.feature'")
        if not np.all(np.isfinite(vals)):
            bad = [n for n, v in zip(names, vals) if not np.isfinite(v)]
            raise ValueError(f"non-finite feature values: {bad}")
        vals.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.names)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))

    def concat(self, other: "FeatureVector") -> "FeatureVector":
        return FeatureVector(self.names + other.names, np.concatenate([self.values, other.values]))


def _masked(v: Volume, m: BinaryMask) -> np.ndarray:
    _check_match(v.geometry, m.geometry, "image and mask")
    vals = v.array[m.bits]
    if vals.size == 0:
        raise ValueError("mask is empty")
    return vals


def _fixed_count_levels(x: np.ndarray, bins: int) -> tuple[np.ndarray, int]:
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        return np.ones(x.shape, dtype=np.int32), 1
    lv = np.floor(bins * (x - lo) / (hi - lo)).astype(np.int64) + 1
    return np.minimum(lv, bins).astype(np.int32), bins


def discretize(v: Volume, m: BinaryMask, cfg: DiscretizationConfig = DiscretizationConfig()):
    """Gray levels ``1..N`` inside the mask, 0 outside; returns ``(labels, N)``."""
    vals = _masked(v, m)
    labels = np.zeros(v.geometry.dims, dtype=np.int32)
    if cfg.mode == "fixed_count":
        lv, n = _fixed_count_levels(vals, cfg.bins)
    else:
        lv = (np.floor((vals - vals.min()) / cfg.bin_width) + 1).astype(np.int32)
        n = int(lv.max())
    labels[m.bits] = lv
    return labels, n


def first_order_features(v: Volume, m: BinaryMask) -> FeatureVector:
    x = _masked(v, m)
    n = x.size
    mean = float(x.mean())
    dev = x - mean
    var = float(np.mean(dev * dev))
    std = float(np.sqrt(var))
    if std > 0:
        skew = float(np.mean(dev**3) / var**1.5)
        kurt = float(np.mean(dev**4) / var**2 - 3.0)
    else:
        skew = kurt = 0.0
    lv, _ = _fixed_count_levels(x, ENTROPY_BINS)
    p = np.bincount(lv)[1:] / n
    p = p[p > 0]
    entropy = float(-np.sum(p * np.log2(p)))
    p10, p25, p50, p75, p90 = np.percentile(x, [10, 25, 50, 75, 90])
    vals = [mean, float(p50), float(x.min()), float(x.max()), float(x.max() - x.min()), var, std,
            skew, kurt, float(np.sum(x * x)), float(np.sqrt(np.mean(x * x))), entropy,
            float(p10), float(p90), float(p75 - p25), float(np.mean(np.abs(dev)))]
    return FeatureVector(tuple(f"first_order.{k}" for k in FIRST_ORDER), vals)


def exposed_face_area_mm2(m: BinaryMask) -> float:
    """Sum of voxel faces separating the region from background (grid edge counts as background)."""
    padded = np.pad(m.bits, 1).astype(np.int8)
    sx, sy, sz = m.geometry.spacing
    face = (sy * sz, sx * sz, sx * sy)
    return float(sum(np.count_nonzero(np.diff(padded, axis=a)) * face[a] for a in range(3)))


def _taubin(verts, faces, iterations, lam=0.5, mu=-0.53):
    n = len(verts)
    i = np.concatenate([faces[:, 0], faces[:, 1], faces[:, 2], faces[:, 1], faces[:, 2], faces[:, 0]])
    j = np.concatenate([faces[:, 1], faces[:, 2], faces[:, 0], faces[:, 0], faces[:, 1], faces[:, 2]])
    adj = sparse.coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n)).tocsr()
    adj.data[:] = 1.0
    walk = sparse.diags(1.0 / np.asarray(adj.sum(axis=1)).ravel()) @ adj
    for _ in range(iterations):
        verts = verts + lam * (walk @ verts - verts)
        verts = verts + mu * (walk @ verts - verts)
    return verts


def mesh_sphericity(m: BinaryMask) -> float:
    """Sphericity of the smoothed marching-cubes surface of the mask.

    Area and enclosed volume both come from the same closed mesh, so the
    result never exceeds 1.
    """
    padded = np.pad(m.bits, 1).astype(np.float64)
    verts, faces, _, _ = measure.marching_cubes(padded, 0.5, spacing=m.geometry.spacing)
    verts = _taubin(verts, faces, MESH_SMOOTHING_ITERATIONS)
    area = measure.mesh_surface_area(verts, faces)
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    vol = abs(np.einsum("ij,ij->i", a, np.cross(b, c)).sum()) / 6.0
    if area <= 0:
        return 1.0
    return float(min(np.pi ** (1 / 3) * (6.0 * vol) ** (2 / 3) / area, 1.0))


def boundary_voxels(bits: np.ndarray) -> np.ndarray:
    """Region voxels with at least one 6-neighbour outside the region."""
    padded = np.pad(bits, 1)
    core = padded[1:-1, 1:-1, 1:-1]
    interior = core.copy()
    for a in range(3):
        for s in (1, -1):
            interior &= np.roll(padded, s, axis=a)[1:-1, 1:-1, 1:-1]
    return bits & ~interior


def max_diameter_mm(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    cand = points
    if len(points) > 64:
        try:
            cand = points[ConvexHull(points).vertices]
        except QhullError:
            cand = points
    best = 0.0
    for chunk in np.array_split(cand, max(1, len(cand) // 512)):
        d2 = ((chunk[:, None, :] - cand[None, :, :]) ** 2).sum(axis=2)
        best = max(best, float(d2.max()))
    return float(np.sqrt(best))


def principal_moments(m: BinaryMask) -> np.ndarray:
    """Descending eigenvalues of the population covariance of voxel-centre positions (mm²)."""
    pts = voxel_to_world(m.geometry, np.argwhere(m.bits).astype(np.float64))
    if len(pts) < 2:
        return np.zeros(3)
    cov = np.cov(pts.T, bias=True)
    return np.clip(np.sort(np.linalg.eigvalsh(cov))[::-1], 0.0, None)


def shape_features(m: BinaryMask) -> FeatureVector:
    if m.count == 0:
        raise ValueError("mask is empty")
    vol_mm3 = m.count * m.geometry.voxel_volume_mm3
    area_mm2 = exposed_face_area_mm2(m)
    surface = voxel_to_world(m.geometry, np.argwhere(boundary_voxels(m.bits)).astype(np.float64))
    lam = principal_moments(m)
    if lam[0] > 0:
        elong = float(np.sqrt(lam[1] / lam[0]))
        flat = float(np.sqrt(lam[2] / lam[0]))
    else:
        elong = flat = 1.0
    vals = [vol_mm3 / 1000.0, area_mm2 / 100.0, area_mm2 / vol_mm3, mesh_sphericity(m),
            max_diameter_mm(surface), elong, flat]
    return FeatureVector(tuple(f"shape.{k}" for k in SHAPE), vals)


def glcm_matrix(labels: np.ndarray, nlevels: int, distance: int = 1, directions=None) -> np.ndarray:
    """Symmetric co-occurrence counts over the given directions, summed into one matrix."""
    dirs = DIRECTIONS_13 if directions is None else np.asarray(directions, dtype=np.int64).reshape(-1, 3)
    return kernels.glcm_counts(labels, nlevels, dirs * int(distance))


def glcm_from_matrix(counts: np.ndarray) -> list[float]:
    total = counts.sum()
    if total == 0:
        return [0.0] * len(GLCM)
    p = counts / total
    lv = np.arange(1, p.shape[0] + 1, dtype=np.float64)
    i, j = np.meshgrid(lv, lv, indexing="ij")
    diff = i - j
    nz = p > 0
    px = p.sum(axis=1)
    mu = float(np.sum(lv * px))
    var = float(np.sum((lv - mu) ** 2 * px))
    if np.count_nonzero(px) > 1 and var > 0:
        corr = float(np.clip((np.sum(i * j * p) - mu * mu) / var, -1.0, 1.0))
    else:
        corr = 0.0
    return [
        float(np.sum(p * diff * diff)),
        float(np.sum(p * np.abs(diff))),
        float(np.sum(p * p)),
        float(-np.sum(p[nz] * np.log2(p[nz]))),
        float(np.sum(p / (1.0 + diff * diff))),
        corr,
    ]


def glcm_features(v: Volume, m: BinaryMask, cfg: DiscretizationConfig = DiscretizationConfig(),
                  distance: int = 1, directions=None) -> FeatureVector:
    labels, n = discretize(v, m, cfg)
    vals = glcm_from_matrix(glcm_matrix(labels, n, distance, directions))
    return FeatureVector(tuple(f"glcm.{k}" for k in GLCM), vals)


def glrlm_matrix(labels: np.ndarray, nlevels: int, directions=None) -> np.ndarray:
    dirs = DIRECTIONS_13 if directions is None else np.asarray(directions, dtype=np.int64).reshape(-1, 3)
    return kernels.glrlm_counts(labels, nlevels, dirs)


def glrlm_from_matrix(runs: np.ndarray, n_voxels: int, n_directions: int) -> list[float]:
    nr = runs.sum()
    if nr == 0:
        return [0.0] * len(GLRLM)
    length = np.arange(1, runs.shape[1] + 1, dtype=np.float64)
    by_level = runs.sum(axis=1)
    by_length = runs.sum(axis=0)
    return [
        float(np.sum(by_length / length**2) / nr),
        float(np.sum(by_length * length**2) / nr),
        float(np.sum(by_level**2) / nr),
        float(np.sum(by_length**2) / nr),
        float(nr / (n_voxels * n_directions)),
    ]


def glrlm_features(v: Volume, m: BinaryMask, cfg: DiscretizationConfig = DiscretizationConfig(),
                   directions=None) -> FeatureVector:
    labels, n = discretize(v, m, cfg)
    dirs = DIRECTIONS_13 if directions is None else np.asarray(directions, dtype=np.int64).reshape(-1, 3)
    runs = glrlm_matrix(labels, n, dirs)
    vals = glrlm_from_matrix(runs, m.count, len(dirs))
    return FeatureVector(tuple(f"glrlm.{k}" for k in GLRLM), vals)


def extract_features(v: Volume, m: BinaryMask, cfg: DiscretizationConfig = DiscretizationConfig(),
                     distance: int = 1) -> FeatureVector:
    """All 34 features in the order of :data:`FEATURE_NAMES`."""
    _masked(v, m)
    fv = (first_order_features(v, m)
          .concat(shape_features(m))
          .concat(glcm_features(v, m, cfg, distance))
          .concat(glrlm_features(v, m, cfg)))
    assert fv.names == FEATURE_NAMES
    return fv


def delta_features(a: FeatureVector, b: FeatureVector) -> FeatureVector:
    """Element-wise ``|a - b|`` with names prefixed ``delta.``."""
    if a.names != b.names:
        raise ValueError("feature vectors have different name lists")
    return FeatureVector(tuple(f"delta.{n}" for n in a.names), np.abs(a.values - b.values))
