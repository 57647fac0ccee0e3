"""Volumetric data model: geometry, volumes, masks, resampling and NIfTI I/O.

Arrays are indexed ``[x, y, z]``; the flat ``values`` view is x-fastest.
"""
from __future__ import annotations

import gzip
import io
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import nibabel as nib
import numpy as np

from . import kernels

UNITS = ("HU", "intensity", "Gy", "normalized")

# NIfTI datatype codes accepted on read.
_READ_DTYPES = {2: "uint8", 4: "int16", 8: "int32", 16: "float32", 64: "float64"}


@dataclass(frozen=True, eq=False)
class Geometry:
    """Voxel grid placement in world (scanner) millimetres."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    direction: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        direction = np.array(self.direction, dtype=np.float64).reshape(3, 3)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        if len(spacing) != 3 or not all(np.isfinite(spacing)) or min(spacing) <= 0:
            raise ValueError(f"spacing must be three positive numbers, got {self.spacing}")
        if len(origin) != 3 or not all(np.isfinite(origin)):
            raise ValueError(f"origin must be three finite numbers, got {self.origin}")
        if np.abs(direction.T @ direction - np.eye(3)).max() > 1e-6:
            raise ValueError("direction matrix is not orthonormal")
        if abs(abs(np.linalg.det(direction)) - 1.0) > 1e-6:
            raise ValueError("direction matrix determinant is not +/-1")
        direction.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def voxel_volume_mm3(self) -> float:
        return self.spacing[0] * self.spacing[1] * self.spacing[2]

    @property
    def affine(self) -> np.ndarray:
        """4x4 voxel-index to world map."""
        a = np.eye(4)
        a[:3, :3] = self.direction * np.asarray(self.spacing)
        a[:3, 3] = self.origin
        return a

    @property
    def inverse_affine(self) -> np.ndarray:
        """4x4 world to voxel-index map, built from the orthonormal factors."""
        a = np.eye(4)
        rot = self.direction.T / np.asarray(self.spacing)[:, None]
        a[:3, :3] = rot
        a[:3, 3] = -rot @ np.asarray(self.origin)
        return a

    @property
    def center(self) -> np.ndarray:
        """World position of the grid's physical centre."""
        mid = (np.asarray(self.dims, dtype=np.float64) - 1.0) / 2.0
        return voxel_to_world(self, mid)

    def matches(self, other: "Geometry", tol: float = 1e-4) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, atol=tol, rtol=0)
            and np.allclose(self.origin, other.origin, atol=tol, rtol=0)
            and np.allclose(self.direction, other.direction, atol=tol, rtol=0)
        )

    @classmethod
    def from_affine(cls, dims, affine) -> "Geometry":
        """Split a rigid-plus-scaling affine into spacing, origin and direction."""
        affine = np.asarray(affine, dtype=np.float64)
        lin = affine[:3, :3]
        spacing = np.linalg.norm(lin, axis=0)
        if np.any(spacing <= 0):
            raise ValueError("affine has a zero-length axis")
        direction = lin / spacing
        # polar projection removes float32 storage noise
        u, _, vt = np.linalg.svd(direction)
        if np.abs(direction - u @ vt).max() > 1e-4:
            raise ValueError("affine contains shear; only rigid geometries are supported")
        return cls(tuple(dims), tuple(spacing), tuple(affine[:3, 3]), u @ vt)


def _check_match(a: Geometry, b: Geometry, what: str = "inputs"):
    if not a.matches(b):
        raise ValueError(f"geometry mismatch between {what}")


@dataclass(frozen=True, eq=False)
class Volume:
    """Scalar image on a :class:`Geometry`."""

    geometry: Geometry
    array: np.ndarray
    unit: str = "intensity"

    def __post_init__(self):
        arr = np.array(self.array, dtype=np.float64)
        if arr.shape != self.geometry.dims:
            raise ValueError(f"array shape {arr.shape} does not match dims {self.geometry.dims}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("volume contains NaN or Inf values")
        if self.unit not in UNITS:
            raise ValueError(f"unknown unit {self.unit!r}; expected one of {UNITS}")
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    @property
    def values(self) -> np.ndarray:
        """Flat x-fastest view of the voxel values."""
        return self.array.ravel(order="F")

    def with_array(self, array, unit: str | None = None) -> "Volume":
        return Volume(self.geometry, array, self.unit if unit is None else unit)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean region on a :class:`Geometry`."""

    geometry: Geometry
    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool)
        if bits.shape != self.geometry.dims:
            raise ValueError(f"mask shape {bits.shape} does not match dims {self.geometry.dims}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def values(self) -> np.ndarray:
        return self.bits.ravel(order="F")


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """World-to-world rigid map stored as a 4x4 homogeneous matrix."""

    matrix: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64).reshape(4, 4)
        if not np.all(np.isfinite(m)):
            raise ValueError("transform matrix is not finite")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("bottom row of a rigid transform must be (0, 0, 0, 1)")
        rot = m[:3, :3]
        if np.abs(rot.T @ rot - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation block is not a proper rotation")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(4))

    @classmethod
    def from_rotation_translation(cls, rotation, translation) -> "RigidTransform":
        m = np.eye(4)
        m[:3, :3] = rotation
        m[:3, 3] = translation
        return cls(m)

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3]

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation


def voxel_to_world(g: Geometry, p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return np.asarray(g.origin) + (p * np.asarray(g.spacing)) @ g.direction.T


def world_to_voxel(g: Geometry, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    return ((w - np.asarray(g.origin)) @ g.direction) / np.asarray(g.spacing)


def map_coordinates(g: Geometry, p, mode: str = "voxel_to_world") -> np.ndarray:
    """Map a point (or an ``(N, 3)`` array) between voxel and world space."""
    if mode in ("voxel_to_world", "voxel->world"):
        return voxel_to_world(g, p)
    if mode in ("world_to_voxel", "world->voxel"):
        return world_to_voxel(g, p)
    raise ValueError(f"unknown mapping mode {mode!r}")


def grid_points(dims) -> np.ndarray:
    """All voxel indices of a grid as an ``(N, 3)`` float array in C order."""
    idx = np.indices(dims, dtype=np.float64)
    return idx.reshape(3, -1).T


def _interp_order(interp: str) -> int:
    if interp == "nearest":
        return 0
    if interp == "trilinear":
        return 1
    raise ValueError(f"unknown interpolation {interp!r}")


def sample_with_affine(array, index_map: np.ndarray, dims, interp: str, fill: float) -> np.ndarray:
    """Sample ``array`` on a grid whose voxel indices map to source indices via ``index_map``."""
    pts = grid_points(dims)
    src = pts @ index_map[:3, :3].T + index_map[:3, 3]
    out = kernels.sample_points(np.ascontiguousarray(array, dtype=np.float64), src,
                                _interp_order(interp), float(fill))
    return out.reshape(dims)


def resample(src: Volume, target: Geometry, interp: str = "trilinear", fill: float = 0.0) -> Volume:
    """Resample ``src`` onto ``target``; voxels outside the source field get ``fill``."""
    index_map = src.geometry.inverse_affine @ target.affine
    out = sample_with_affine(src.array, index_map, target.dims, interp, fill)
    return Volume(target, out, src.unit)


def resample_mask(m: BinaryMask, target: Geometry) -> BinaryMask:
    """Nearest-neighbour resampling of a mask; outside the source field is False."""
    index_map = m.geometry.inverse_affine @ target.affine
    out = sample_with_affine(m.bits.astype(np.float64), index_map, target.dims, "nearest", 0.0)
    return BinaryMask(target, out > 0.5)


def _read_raw_header(path: Path) -> bytes:
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read(348)


def read_nifti(path, unit: str = "intensity") -> Volume:
    """Read a single-file NIfTI-1 image.

    Geometry comes from the sform when ``sform_code > 0``, else the qform,
    else pixdim spacing with identity direction and zero origin.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such NIfTI file: {path}")
    raw = _read_raw_header(path)
    if len(raw) < 348:
        raise ValueError(f"{path}: truncated NIfTI header")
    sizeof_hdr_le = struct.unpack("<i", raw[:4])[0]
    sizeof_hdr_be = struct.unpack(">i", raw[:4])[0]
    if 540 in (sizeof_hdr_le, sizeof_hdr_be):
        raise ValueError(f"{path}: NIfTI-2 files are not supported")
    if raw[344:348] != b"n+1\x00":
        raise ValueError(f"{path}: bad magic {raw[344:348]!r}, expected single-file NIfTI-1")

    img = nib.Nifti1Image.from_filename(str(path))
    # the loaded image header has scaling reset; keep the on-disk fields
    hdr = nib.Nifti1Header.from_fileobj(io.BytesIO(raw))
    code = int(hdr["datatype"])
    if code not in _READ_DTYPES:
        raise ValueError(f"{path}: unsupported datatype code {code}")
    if int(hdr["dim"][0]) != 3:
        raise ValueError(f"{path}: expected a 3-D image, dim[0] = {int(hdr['dim'][0])}")
    dims = tuple(int(d) for d in hdr["dim"][1:4])

    sform_code = int(hdr["sform_code"])
    qform_code = int(hdr["qform_code"])
    if sform_code > 0:
        geom = Geometry.from_affine(dims, hdr.get_sform())
    elif qform_code > 0:
        geom = Geometry.from_affine(dims, hdr.get_qform())
    else:
        spacing = tuple(abs(float(s)) for s in hdr["pixdim"][1:4])
        geom = Geometry(dims, spacing)

    raw_data = np.asarray(img.dataobj.get_unscaled(), dtype=np.float64).reshape(dims)
    slope = float(hdr["scl_slope"])
    inter = float(hdr["scl_inter"])
    if np.isfinite(slope) and slope != 0.0:
        raw_data = raw_data * slope + (inter if np.isfinite(inter) else 0.0)
    return Volume(geom, raw_data, unit)


def write_nifti(v: Volume, path, descrip: str = "") -> None:
    """Write ``v`` as little-endian float32 NIfTI-1 with an sform geometry."""
    path = Path(path)
    parent = path.parent if str(path.parent) else Path(".")
    if not parent.is_dir() or not os.access(parent, os.W_OK):
        raise OSError(f"cannot write NIfTI to {path}")
    hdr = nib.Nifti1Header()
    hdr.set_data_dtype(np.float32)
    img = nib.Nifti1Image(np.asarray(v.array, dtype=np.float32), v.geometry.affine, hdr)
    img.header.set_sform(v.geometry.affine, code=1)
    img.header.set_qform(v.geometry.affine, code=1)
    img.header.set_xyzt_units("mm")
    img.header["descrip"] = descrip[:79].encode("ascii", "replace")
    img.header["scl_slope"] = 1.0
    img.header["scl_inter"] = 0.0
    img.to_filename(str(path))


def read_mask(path) -> BinaryMask:
    vol = read_nifti(path)
    return BinaryMask(vol.geometry, vol.array > 0.5)


def write_mask(m: BinaryMask, path, descrip: str = "") -> None:
    write_nifti(Volume(m.geometry, m.bits.astype(np.float64)), path, descrip)
