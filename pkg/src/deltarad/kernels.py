"""Backend selection for the hot kernels.

The compiled extension is used when importable; set ``DELTARAD_PURE_PYTHON=1``
to force the numpy implementations.
"""
import os

from . import _pykernels

_FORCE_PURE = os.environ.get("DELTARAD_PURE_PYTHON", "").lower() in ("1", "true", "yes")

if _FORCE_PURE:
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _pykernels
        BACKEND = "python"

glcm_counts = _impl.glcm_counts
glrlm_counts = _impl.glrlm_counts
sample_points = _impl.sample_points
best_split_gini = _impl.best_split_gini
best_split_newton = _impl.best_split_newton

__all__ = [
    "BACKEND",
    "glcm_counts",
    "glrlm_counts",
    "sample_points",
    "best_split_gini",
    "best_split_newton",
]
