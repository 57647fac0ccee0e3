"""CT windowing, slice-wise CLAHE for MRI, and median-filter artifact reduction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volgrid import Volume


@dataclass(frozen=True)
class WindowSpec:
    """Display window in HU. Defaults to the standard brain window."""

    level: float = 40.0
    width: float = 80.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"window width must be positive, got {self.width}")


@dataclass(frozen=True)
class ClaheSpec:
    tiles: tuple[int, int] = (8, 8)
    clip_limit: float = 2.0
    bins: int = 256

    def __post_init__(self):
        object.__setattr__(self, "tiles", tuple(int(t) for t in self.tiles))
        if len(self.tiles) != 2 or min(self.tiles) < 1:
            raise ValueError(f"tile grid must be two integers >= 1, got {self.tiles}")
        if not self.clip_limit > 1:
            raise ValueError(f"clip limit must exceed 1, got {self.clip_limit}")
        if self.bins < 2:
            raise ValueError(f"bins must be >= 2, got {self.bins}")


def window(v: Volume, w: WindowSpec = WindowSpec()) -> Volume:
    """Map ``[level - width/2, level + width/2]`` linearly onto ``[0, 1]`` with clamping."""
    if not w.width > 0:
        raise ValueError("window width must be positive")
    lo = w.level - w.width / 2.0
    out = np.clip((v.array - lo) / w.width, 0.0, 1.0)
    return Volume(v.geometry, out, "normalized")


def _tile_edges(n: int, t: int) -> np.ndarray:
    t = min(t, n)
    return np.round(np.linspace(0, n, t + 1)).astype(np.int64)


def _interp_weights(n: int, edges: np.ndarray):
    """Lower/upper tile index and weight of the upper tile for each pixel row."""
    centers = (edges[:-1] + edges[1:] - 1) / 2.0
    t = len(centers)
    pos = np.arange(n, dtype=np.float64)
    lower = np.clip(np.searchsorted(centers, pos, side="right") - 1, 0, t - 1)
    upper = np.minimum(lower + 1, t - 1)
    span = centers[upper] - centers[lower]
    with np.errstate(divide="ignore", invalid="ignore"):
        wt = np.where(span > 0, (pos - centers[lower]) / span, 0.0)
    return lower, upper, np.clip(wt, 0.0, 1.0)


def tile_mappings(bin_idx: np.ndarray, spec: ClaheSpec):
    """Clipped-histogram equalisation map per tile, shape ``(tx, ty, bins)``.

    Each map is a normalised cumulative histogram, so it is monotone and
    bounded by [0, 1].
    """
    nx, ny = bin_idx.shape
    ex = _tile_edges(nx, spec.tiles[0])
    ey = _tile_edges(ny, spec.tiles[1])
    maps = np.empty((len(ex) - 1, len(ey) - 1, spec.bins))
    for i in range(len(ex) - 1):
        for j in range(len(ey) - 1):
            tile = bin_idx[ex[i]:ex[i + 1], ey[j]:ey[j + 1]].ravel()
            hist = np.bincount(tile, minlength=spec.bins).astype(np.float64)
            limit = spec.clip_limit * tile.size / spec.bins
            excess = np.maximum(hist - limit, 0.0).sum()
            hist = np.minimum(hist, limit) + excess / spec.bins
            cdf = np.cumsum(hist)
            maps[i, j] = cdf / cdf[-1]
    return maps, ex, ey


def clahe_slice(img: np.ndarray, spec: ClaheSpec) -> np.ndarray:
    lo, hi = float(img.min()), float(img.max())
    if hi <= lo:
        return np.full(img.shape, 0.5)
    b = np.minimum(((img - lo) / (hi - lo) * spec.bins).astype(np.int64), spec.bins - 1)
    maps, ex, ey = tile_mappings(b, spec)
    x0, x1, wx = _interp_weights(img.shape[0], ex)
    y0, y1, wy = _interp_weights(img.shape[1], ey)
    X0, Y0 = np.meshgrid(x0, y0, indexing="ij")
    X1, Y1 = np.meshgrid(x1, y1, indexing="ij")
    WX, WY = np.meshgrid(wx, wy, indexing="ij")
    out = ((1 - WX) * (1 - WY) * maps[X0, Y0, b] + WX * (1 - WY) * maps[X1, Y0, b]
           + (1 - WX) * WY * maps[X0, Y1, b] + WX * WY * maps[X1, Y1, b])
    return np.clip(out, 0.0, 1.0)


def clahe(v: Volume, spec: ClaheSpec = ClaheSpec()) -> Volume:
    """Contrast-limited adaptive histogram equalisation on each axial (z) slice.

    Intensities are min-max scaled per slice before binning. Constant slices
    come out as 0.5.
    """
    out = np.empty(v.geometry.dims)
    for z in range(v.geometry.dims[2]):
        out[:, :, z] = clahe_slice(v.array[:, :, z], spec)
    return Volume(v.geometry, out, "normalized")


def denoise_median(v: Volume, radius: int = 1) -> Volume:
    """Median over the ``(2r+1)^3`` neighbourhood with edge clamping."""
    if radius < 1:
        raise ValueError("median radius must be >= 1")
    out = ndimage.median_filter(v.array, size=2 * radius + 1, mode="nearest")
    return Volume(v.geometry, out, v.unit)
