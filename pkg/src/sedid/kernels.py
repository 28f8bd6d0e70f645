"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback is loaded. Set ``SEDID_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("SEDID_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py


def splitmix64(seed: int, start: int, n: int) -> np.ndarray:
    return _impl.splitmix64(seed, start, n)


def std_normal(seed: int, start: int, n: int) -> np.ndarray:
    return _impl.std_normal(seed, start, n)


def row_sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    return _impl.row_sq_dist(a, b)


def tie_groups(scores: np.ndarray, labels: np.ndarray):
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    return _impl.tie_groups(scores, labels)
