# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: pair sums over grid nodes and counter-based normals."""
import numpy as np

from libc.math cimport sqrt, log1p, cos, pow, fabs
from libc.stdint cimport uint64_t

cdef double _INV53 = 1.0 / 9007199254740992.0
cdef double _TWO_PI = 6.283185307179586


cdef inline uint64_t _mix64(uint64_t x) nogil:
    cdef uint64_t z = x + <uint64_t>0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


def mix64(x):
    cdef const uint64_t[::1] src = np.ascontiguousarray(np.atleast_1d(x), dtype=np.uint64)
    out = np.empty(src.shape[0], dtype=np.uint64)
    cdef uint64_t[::1] dst = out
    cdef Py_ssize_t i
    for i in range(src.shape[0]):
        dst[i] = _mix64(src[i])
    return out if np.ndim(x) else out[0]


def counter_normals(stream_keys, mode_keys):
    cdef const uint64_t[::1] s = np.ascontiguousarray(stream_keys, dtype=np.uint64)
    cdef const uint64_t[::1] m = np.ascontiguousarray(mode_keys, dtype=np.uint64)
    cdef Py_ssize_t n = s.shape[0], J = m.shape[0], a, j
    out = np.empty((n, J), dtype=np.float64)
    cdef double[:, ::1] z = out
    cdef uint64_t h1, h2
    cdef double u1, u2
    with nogil:
        for a in range(n):
            for j in range(J):
                h1 = _mix64(s[a] ^ m[j])
                h2 = _mix64(h1)
                u1 = <double>(h1 >> 11) * _INV53
                u2 = <double>(h2 >> 11) * _INV53
                z[a, j] = sqrt(-2.0 * log1p(-u1)) * cos(_TWO_PI * u2)
    return out


def pair_sum(values, coords, double power):
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(coords, dtype=np.float64)
    cdef Py_ssize_t P = v.shape[0], d = x.shape[1], k, l, c
    cdef double total = 0.0, row, dist2, diff, dv
    cdef double half = 0.5 * power
    with nogil:
        # each unordered pair once, doubled at the end
        for k in range(P):
            row = 0.0
            for l in range(k + 1, P):
                dist2 = 0.0
                for c in range(d):
                    diff = x[k, c] - x[l, c]
                    dist2 = dist2 + diff * diff
                dv = v[k] - v[l]
                row = row + dv * dv / pow(dist2, half)
            total = total + row
    return 2.0 * total


def pair_max(values, coords, double delta):
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(coords, dtype=np.float64)
    cdef Py_ssize_t P = v.shape[0], d = x.shape[1], k, l, c
    cdef double best = 0.0, dist2, diff, q
    cdef double half = 0.5 * delta
    with nogil:
        for k in range(P):
            for l in range(k + 1, P):
                dist2 = 0.0
                for c in range(d):
                    diff = x[k, c] - x[l, c]
                    dist2 = dist2 + diff * diff
                q = fabs(v[k] - v[l]) / pow(dist2, half)
                if q > best:
                    best = q
    return best
