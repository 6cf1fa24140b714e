"""Hot point-cloud kernels: compiled Cython when built, numpy otherwise.

Set ``OMNILENS_PURE_PYTHON=1`` to force the numpy backend.
"""
import os

import numpy as np

from omnilens._kernels import _reference

if os.environ.get("OMNILENS_PURE_PYTHON") == "1":
    _fast = None
else:
    try:
        from omnilens._kernels import _fast
    except ImportError:
        _fast = None

BACKEND = "cython" if _fast is not None else "numpy"
_impl = _fast if _fast is not None else _reference


def fps(points, g, start=0):
    return _impl.fps(np.ascontiguousarray(points, dtype=np.float64), int(g), int(start))


def knn(points, centers, k):
    return _impl.knn(
        np.ascontiguousarray(points, dtype=np.float64),
        np.ascontiguousarray(centers, dtype=np.float64),
        int(k),
    )
