"""Pure numpy implementations of the hot kernels.

Every function here has a compiled twin in ``_kernels.pyx`` and must return
bit-identical results; ``tests/test_kernels.py`` checks the pairing.
"""
import numpy as np
from scipy.special import ndtri

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0 ** -53


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def splitmix64(seed, start, n):
    """Words ``start .. start+n-1`` of the SplitMix64 stream for ``seed``."""
    with np.errstate(over="ignore"):
        k = np.arange(1, n + 1, dtype=np.uint64) + np.uint64(start)
        return _mix(np.uint64(seed) + k * GAMMA)


def std_normal(seed, start, n):
    u = splitmix64(seed, start, n)
    return ndtri(((u >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53)


def row_sq_dist(a, b):
    """Per-row sum of squared differences of two (N, D) float64 arrays.

    Columns are accumulated left to right so the result matches a scalar loop.
    """
    acc = np.zeros(a.shape[0], dtype=np.float64)
    for j in range(a.shape[1]):
        d = a[:, j] - b[:, j]
        acc += d * d
    return acc


def tie_groups(scores, labels):
    """Collapse sorted ``scores`` into runs of equal value.

    Returns (values, positives, negatives) where the counts are how many
    entries of each run carry label 1 and label 0.
    """
    n = scores.shape[0]
    if n == 0:
        return np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64)
    starts = np.flatnonzero(np.r_[True, scores[1:] != scores[:-1]])
    pos = np.add.reduceat(labels.astype(np.int64), starts)
    size = np.diff(np.r_[starts, n])
    return scores[starts].copy(), pos, size - pos
