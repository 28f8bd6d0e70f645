# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_kernels_py``."""
import numpy as np
from libc.stdint cimport uint64_t, int64_t
from scipy.special.cython_special cimport ndtri

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def splitmix64(uint64_t seed, uint64_t start, Py_ssize_t n):
    out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            o[i] = _mix(seed + (start + <uint64_t>i + 1) * GAMMA)
    return out


def std_normal(uint64_t seed, uint64_t start, Py_ssize_t n):
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    cdef uint64_t u
    with nogil:
        for i in range(n):
            u = _mix(seed + (start + <uint64_t>i + 1) * GAMMA)
            o[i] = ndtri((<double>(u >> 11) + 0.5) * TWO_M53)
    return out


def row_sq_dist(const double[:, :] a, const double[:, :] b):
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], i, j
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double d, acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(m):
                d = a[i, j] - b[i, j]
                acc = acc + d * d
            o[i] = acc
    return out


def tie_groups(const double[::1] scores, const int64_t[::1] labels):
    cdef Py_ssize_t n = scores.shape[0], i, g = -1
    values = np.empty(n, dtype=np.float64)
    pos = np.zeros(n, dtype=np.int64)
    neg = np.zeros(n, dtype=np.int64)
    cdef double[::1] v = values
    cdef int64_t[::1] p = pos
    cdef int64_t[::1] q = neg
    with nogil:
        for i in range(n):
            if g < 0 or scores[i] != v[g]:
                g += 1
                v[g] = scores[i]
            if labels[i]:
                p[g] += 1
            else:
                q[g] += 1
    return values[:g + 1], pos[:g + 1], neg[:g + 1]
