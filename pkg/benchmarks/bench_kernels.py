"""Compare the compiled and pure-numpy kernel backends on representative inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is timed on both backends with identical inputs, and the outputs
are checked for agreement before any timing is reported.
"""
import argparse
import time

import numpy as np

from deltarad import _pykernels
from deltarad.radiomics import DIRECTIONS_13

try:
    from deltarad import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _cases(rng):
    labels = np.zeros((48, 48, 48), dtype=np.int32)
    labels[4:44, 4:44, 4:44] = rng.integers(1, 33, (40, 40, 40))
    offsets = np.asarray(DIRECTIONS_13, dtype=np.int64)
    vol = rng.normal(size=(64, 64, 64))
    pts = rng.uniform(-2, 66, (200_000, 3))
    X = rng.normal(size=(2000, 40))
    y = (X[:, 0] + rng.normal(size=2000) > 0).astype(np.float64)
    w = np.ones(2000)
    rows = np.arange(2000, dtype=np.int64)
    feats = np.arange(40, dtype=np.int64)
    g = rng.normal(size=2000)
    h = rng.uniform(0.1, 0.25, 2000)
    return {
        "glcm_counts 40^3, 32 levels": ("glcm_counts", (labels, 32, offsets)),
        "glrlm_counts 40^3, 32 levels": ("glrlm_counts", (labels, 32, offsets)),
        "sample_points trilinear 2e5": ("sample_points", (vol, pts, 1, 0.0)),
        "sample_points nearest 2e5": ("sample_points", (vol, pts, 0, 0.0)),
        "best_split_gini 2000x40": ("best_split_gini", (X, y, w, rows, feats, 1)),
        "best_split_newton 2000x40": ("best_split_newton", (X, g, h, rows, feats, 1.0, 1.0, 1)),
    }


def _time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-9, atol=1e-9, equal_nan=True)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'python (s)':>11s} {'cython (s)':>11s} {'speedup':>8s}  agree")
    for name, (fn, fargs) in _cases(rng).items():
        tp, op = _time(getattr(_pykernels, fn), fargs, args.repeat)
        tc, oc = _time(getattr(_ckernels, fn), fargs, args.repeat)
        print(f"{name:32s} {tp:11.4f} {tc:11.4f} {tp / tc:8.1f}x  {_same(op, oc)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
