import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from deltarad.volgrid import BinaryMask, Geometry, Volume


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_geometry(rng, dims=(8, 8, 8), max_origin=10.0):
    direction = Rotation.random(random_state=int(rng.integers(2**31))).as_matrix()
    if rng.random() < 0.5:
        direction = direction @ np.diag([1.0, 1.0, -1.0])
    spacing = tuple(rng.uniform(0.3, 3.0, size=3))
    origin = tuple(rng.uniform(-max_origin, max_origin, size=3))
    return Geometry(dims, spacing, origin, direction)


def sphere_mask(n, radius, center=None, spacing=(1.0, 1.0, 1.0)):
    c = np.full(3, (n - 1) / 2.0) if center is None else np.asarray(center, dtype=float)
    idx = np.indices((n, n, n)).astype(float)
    dist2 = sum((idx[i] - c[i]) ** 2 for i in range(3))
    return BinaryMask(Geometry((n, n, n), spacing), dist2 <= radius**2)


def random_volume(rng, dims=(8, 8, 8), unit="intensity"):
    return Volume(Geometry(dims), rng.normal(size=dims), unit)


def head_phantom(n=64, smooth=1.0):
    """Asymmetric smooth phantom: an ellipsoidal head with three inserts."""
    from scipy import ndimage

    idx = np.indices((n, n, n)).astype(float)
    s = n / 64.0

    def ellipsoid(c, r):
        return sum(((idx[i] - c[i] * s) / (r[i] * s)) ** 2 for i in range(3)) <= 1.0

    arr = np.zeros((n, n, n))
    arr[ellipsoid((32, 32, 32), (22, 18, 15))] = 1.0
    arr[ellipsoid((25, 36, 30), (6, 8, 5))] = 2.5
    arr[ellipsoid((40, 26, 36), (5, 4, 7))] = 0.4
    arr[ellipsoid((30, 22, 28), (3, 3, 3))] = 3.0
    obj = ellipsoid((32, 32, 32), (22, 18, 15))
    return Volume(Geometry((n, n, n)), ndimage.gaussian_filter(arr, smooth)), BinaryMask(Geometry((n, n, n)), obj)


def rotation_angle_deg(rot):
    return float(np.degrees(np.arccos(np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0))))


@pytest.fixture(scope="session")
def demo_runs(tmp_path_factory):
    """Two independent `all` runs on identical demo cohorts; returns (dir_a, dir_b, seconds, exit codes)."""
    import shutil
    import time

    from deltarad.cli import main

    root = tmp_path_factory.mktemp("demo")
    a, b = root / "a", root / "b"
    assert main(["demo", "--out", str(a), "--seed", "0", "--log", "WARNING"]) == 0
    shutil.copytree(a, b)
    t0 = time.perf_counter()
    code_a = main(["all", "--config", str(a / "config.json"), "--log", "WARNING"])
    elapsed = time.perf_counter() - t0
    code_b = main(["all", "--config", str(b / "config.json"), "--log", "WARNING"])
    return a, b, elapsed, (code_a, code_b)


def tree_bytes(root):
    """Relative path -> file bytes for every file under ``root``."""
    from pathlib import Path

    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
