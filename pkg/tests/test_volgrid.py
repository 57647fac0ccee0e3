import gzip
import struct

import nibabel as nib
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_geometry, sphere_mask
from deltarad.registration import dice
from deltarad.volgrid import (
    BinaryMask,
    Geometry,
    RigidTransform,
    Volume,
    map_coordinates,
    read_nifti,
    resample,
    resample_mask,
    write_nifti,
)


def _write_raw(path, data, dtype, slope=None, inter=None, affine=None):
    img = nib.Nifti1Image(np.asarray(data, dtype=dtype), np.eye(4) if affine is None else affine)
    img.to_filename(str(path))
    if slope is not None:
        # patch scl_slope / scl_inter (header offsets 112 and 116) directly
        raw = bytearray(path.read_bytes())
        raw[112:120] = struct.pack("<ff", slope, inter)
        path.write_bytes(bytes(raw))


class TestGeometry:
    def test_rejects_bad_dims_and_spacing(self):
        with pytest.raises(ValueError):
            Geometry((0, 4, 4))
        with pytest.raises(ValueError):
            Geometry((4, 4, 4), (1.0, -1.0, 1.0))

    def test_rejects_non_orthonormal_direction(self):
        with pytest.raises(ValueError):
            Geometry((4, 4, 4), direction=np.diag([1.0, 2.0, 1.0]))

    def test_volume_rejects_nan(self):
        arr = np.zeros((2, 2, 2))
        arr[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            Volume(Geometry((2, 2, 2)), arr)

    def test_values_are_x_fastest(self):
        arr = np.arange(24, dtype=float).reshape(2, 3, 4)
        v = Volume(Geometry((2, 3, 4)), arr)
        assert v.values[0] == arr[0, 0, 0]
        assert v.values[1] == arr[1, 0, 0]
        assert v.values[2] == arr[0, 1, 0]
        assert len(v.values) == 24

    def test_rigid_transform_invariants(self):
        m = np.eye(4)
        m[3, 0] = 1e-3
        with pytest.raises(ValueError):
            RigidTransform(m)
        with pytest.raises(ValueError):
            RigidTransform(np.diag([1.0, 1.0, -1.0, 1.0]))


class TestMapCoordinates:
    def test_origin(self):
        g = Geometry((4, 4, 4), origin=(10, 20, 30))
        assert np.allclose(map_coordinates(g, (0, 0, 0)), (10, 20, 30))

    def test_scaling(self):
        g = Geometry((4, 4, 4), (2, 2, 2), (1, 1, 1))
        assert np.allclose(map_coordinates(g, (1, 1, 1)), (3, 3, 3))

    def test_round_trip_random(self, rng):
        for _ in range(10):
            g = random_geometry(rng, max_origin=200.0)
            p = rng.uniform(-20, 40, size=(100, 3))
            back = map_coordinates(g, map_coordinates(g, p, "voxel_to_world"), "world_to_voxel")
            assert np.abs(back - p).max() <= 1e-9

    @settings(max_examples=1000, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_round_trip_property(self, seed):
        r = np.random.default_rng(seed)
        g = random_geometry(r, max_origin=500.0)
        p = r.uniform(-50, 50, size=3)
        back = map_coordinates(g, map_coordinates(g, p), "world_to_voxel")
        assert np.abs(back - p).max() <= 1e-9

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            map_coordinates(Geometry((2, 2, 2)), (0, 0, 0), "sideways")


class TestNifti:
    def test_synthetic_float32(self, tmp_path):
        path = tmp_path / "a.nii"
        _write_raw(path, np.ones((4, 4, 4)), np.float32)
        v = read_nifti(path)
        assert v.geometry.dims == (4, 4, 4)
        assert len(v.values) == 64
        assert v.geometry.spacing == (1.0, 1.0, 1.0)

    def test_scaling_applied(self, tmp_path):
        path = tmp_path / "scaled.nii"
        _write_raw(path, np.full((2, 2, 2), 3), np.int16, slope=2.0, inter=1.0)
        v = read_nifti(path)
        assert np.all(v.array == 7.0)

    @pytest.mark.parametrize("dtype", [np.uint8, np.int16, np.int32, np.float32, np.float64])
    def test_supported_dtypes(self, tmp_path, dtype):
        path = tmp_path / "d.nii"
        _write_raw(path, np.arange(8).reshape(2, 2, 2), dtype)
        v = read_nifti(path)
        assert np.array_equal(v.array, np.arange(8).reshape(2, 2, 2))

    def test_round_trip_random(self, tmp_path, rng):
        g = random_geometry(rng)
        v = Volume(g, rng.normal(size=(8, 8, 8)))
        path = tmp_path / "rt.nii.gz"
        write_nifti(v, path)
        back = read_nifti(path)
        assert np.abs(back.array - v.array).max() <= 1e-6
        assert np.allclose(back.geometry.spacing, g.spacing, atol=1e-6, rtol=0)
        assert np.allclose(back.geometry.origin, g.origin, atol=1e-6, rtol=0)
        assert np.allclose(back.geometry.direction, g.direction, atol=1e-6, rtol=0)

    def test_zero_volume(self, tmp_path):
        path = tmp_path / "z.nii"
        write_nifti(Volume(Geometry((3, 3, 3)), np.zeros((3, 3, 3))), path)
        assert np.all(read_nifti(path).array == 0.0)

    def test_anisotropic_spacing(self, tmp_path):
        g = Geometry((4, 4, 4), (0.5, 0.5, 2.0))
        path = tmp_path / "s.nii"
        write_nifti(Volume(g, np.zeros(g.dims)), path)
        assert np.allclose(read_nifti(path).geometry.spacing, (0.5, 0.5, 2.0), atol=1e-6)

    def test_axis_permutation_direction(self, tmp_path):
        perm = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        g = Geometry((4, 5, 6), (1.0, 2.0, 3.0), (5.0, -3.0, 1.0), perm)
        path = tmp_path / "p.nii"
        write_nifti(Volume(g, np.zeros(g.dims)), path)
        assert np.allclose(read_nifti(path).geometry.direction, perm, atol=1e-6)

    def test_qform_fallback(self, tmp_path):
        affine = np.diag([2.0, 3.0, 4.0, 1.0])
        affine[:3, 3] = (1, 2, 3)
        img = nib.Nifti1Image(np.zeros((2, 2, 2), np.float32), None)
        img.header.set_qform(affine, code=1)
        img.header.set_sform(np.eye(4), code=0)
        path = tmp_path / "q.nii"
        img.to_filename(str(path))
        g = read_nifti(path).geometry
        assert np.allclose(g.spacing, (2, 3, 4))
        assert np.allclose(g.origin, (1, 2, 3))

    def test_pixdim_only(self, tmp_path):
        img = nib.Nifti1Image(np.zeros((2, 2, 2), np.float32), None)
        img.header.set_zooms((1.5, 1.5, 2.5))
        img.header.set_qform(None, code=0)
        img.header.set_sform(None, code=0)
        path = tmp_path / "pd.nii"
        img.to_filename(str(path))
        g = read_nifti(path).geometry
        assert np.allclose(g.spacing, (1.5, 1.5, 2.5))
        assert np.allclose(g.direction, np.eye(3))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_nifti(tmp_path / "nope.nii")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.nii"
        _write_raw(path, np.zeros((2, 2, 2)), np.float32)
        raw = bytearray(path.read_bytes())
        raw[344:348] = b"ni1\x00"
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="magic"):
            read_nifti(path)

    def test_nifti2_rejected(self, tmp_path):
        path = tmp_path / "two.nii"
        nib.Nifti2Image(np.zeros((2, 2, 2), np.float32), np.eye(4)).to_filename(str(path))
        with pytest.raises(ValueError, match="NIfTI-2"):
            read_nifti(path)

    def test_unsupported_dtype(self, tmp_path):
        path = tmp_path / "c.nii"
        _write_raw(path, np.zeros((2, 2, 2)), np.complex64)
        with pytest.raises(ValueError, match="datatype"):
            read_nifti(path)

    def test_non_3d(self, tmp_path):
        path = tmp_path / "4d.nii"
        _write_raw(path, np.zeros((2, 2, 2, 2)), np.float32)
        with pytest.raises(ValueError, match="3-D"):
            read_nifti(path)

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError):
            write_nifti(Volume(Geometry((2, 2, 2)), np.zeros((2, 2, 2))), tmp_path / "no" / "x.nii")

    def test_gzip_output_is_deterministic(self, tmp_path):
        v = Volume(Geometry((3, 3, 3)), np.arange(27.0).reshape(3, 3, 3))
        write_nifti(v, tmp_path / "a.nii.gz")
        write_nifti(v, tmp_path / "b.nii.gz")
        assert (tmp_path / "a.nii.gz").read_bytes() == (tmp_path / "b.nii.gz").read_bytes()
        with gzip.open(tmp_path / "a.nii.gz") as fh:
            assert fh.read(348)[344:348] == b"n+1\x00"


class TestResample:
    def test_identity_nearest_bit_identical(self, rng):
        g = random_geometry(rng)
        v = Volume(g, rng.normal(size=g.dims))
        assert np.array_equal(resample(v, g, "nearest").array, v.array)

    def test_identity_trilinear_close(self, rng):
        g = random_geometry(rng)
        v = Volume(g, rng.normal(size=g.dims))
        assert np.abs(resample(v, g, "trilinear").array - v.array).max() <= 1e-6

    def test_constant_volume(self, rng):
        src = Volume(Geometry((10, 10, 10)), np.full((10, 10, 10), 5.0))
        target = Geometry((7, 5, 9), (1.1, 1.7, 0.9), (0.5, 1.0, 0.2))
        out = resample(src, target, "trilinear")
        assert np.allclose(out.array, 5.0, atol=1e-12)

    def test_linear_ramp_upsampling(self):
        n = 6
        ramp = np.broadcast_to(np.arange(n, dtype=float)[:, None, None] * 3.0 + 1.0, (n, n, n))
        src = Volume(Geometry((n, n, n)), ramp)
        target = Geometry((2 * n - 1, n, n), (0.5, 1.0, 1.0))
        out = resample(src, target, "trilinear").array
        for i in range(n - 1):
            assert abs(out[2 * i + 1, 2, 2] - (ramp[i, 2, 2] + ramp[i + 1, 2, 2]) / 2) <= 1e-6

    def test_affine_field_exactness(self, rng):
        g = Geometry((8, 8, 8), (1.0, 1.5, 2.0), (3.0, -2.0, 1.0))
        coeff = rng.normal(size=3)
        world = map_coordinates(g, np.indices(g.dims).reshape(3, -1).T.astype(float))
        field = (world @ coeff + 4.0).reshape(g.dims)
        src = Volume(g, field)
        target = Geometry((5, 5, 5), (1.3, 1.1, 1.9), (4.0, 0.0, 3.0))
        out = resample(src, target, "trilinear", fill=0.0)
        tw = map_coordinates(target, np.indices(target.dims).reshape(3, -1).T.astype(float))
        inside = np.all((map_coordinates(g, tw, "world_to_voxel") >= 0)
                        & (map_coordinates(g, tw, "world_to_voxel") <= 7), axis=1)
        expect = tw @ coeff + 4.0
        assert inside.sum() > 20
        assert np.abs(out.array.reshape(-1)[inside] - expect[inside]).max() <= 1e-6

    def test_fill_value(self):
        src = Volume(Geometry((4, 4, 4)), np.ones((4, 4, 4)))
        target = Geometry((4, 4, 4), origin=(100.0, 0.0, 0.0))
        assert np.all(resample(src, target, fill=-7.0).array == -7.0)
        assert np.all(resample(src, target).array == 0.0)

    def test_trilinear_bounded_by_neighbourhood(self, rng):
        src = Volume(Geometry((6, 6, 6)), rng.normal(size=(6, 6, 6)))
        target = Geometry((9, 9, 9), (0.6, 0.6, 0.6), (0.1, 0.2, 0.3))
        out = resample(src, target).array.reshape(-1)
        pts = map_coordinates(src.geometry, map_coordinates(target, np.indices((9, 9, 9)).reshape(3, -1).T.astype(float)), "world_to_voxel")
        for k in range(0, len(pts), 37):
            p = pts[k]
            if np.any(p < 0) or np.any(p > 5):
                continue
            lo = np.floor(p).astype(int)
            hi = np.minimum(lo + 1, 5)
            block = src.array[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1]
            assert block.min() - 1e-12 <= out[k] <= block.max() + 1e-12

    def test_unknown_interp(self):
        v = Volume(Geometry((2, 2, 2)), np.zeros((2, 2, 2)))
        with pytest.raises(ValueError):
            resample(v, v.geometry, "cubic")


class TestResampleMask:
    def test_identity(self, rng):
        g = random_geometry(rng)
        m = BinaryMask(g, rng.random(g.dims) > 0.5)
        assert np.array_equal(resample_mask(m, g).bits, m.bits)

    def test_full_mask(self):
        m = BinaryMask(Geometry((10, 10, 10)), np.ones((10, 10, 10), bool))
        target = Geometry((6, 6, 6), (1.4, 1.4, 1.4), (1.0, 1.0, 1.0))
        assert resample_mask(m, target).bits.all()

    def test_sphere_down_up(self):
        m = sphere_mask(40, 12.0)
        coarse = Geometry((20, 20, 20), (2.0, 2.0, 2.0), (0.5, 0.5, 0.5))
        back = resample_mask(resample_mask(m, coarse), m.geometry)
        assert dice(back, m) >= 0.9
