# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled point-cloud grouping kernels.

Arithmetic mirrors the numpy reference exactly (same operation order, no
fused multiply-add) so both backends return identical indices.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def fps(const double[:, ::1] points, Py_ssize_t g, Py_ssize_t start):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t i, j, best, last
    cdef double cx, cy, cz, dx, dy, dz, d, best_d
    out = np.empty(g, dtype=np.int64)
    cdef cnp.int64_t[::1] idx = out
    dist_arr = np.full(n, INFINITY, dtype=np.float64)
    cdef double[::1] dist = dist_arr
    if g == 0:
        return out
    idx[0] = start
    dist[start] = -1.0
    last = start
    for i in range(1, g):
        cx = points[last, 0]
        cy = points[last, 1]
        cz = points[last, 2]
        best = -1
        best_d = -2.0
        for j in range(n):
            if dist[j] >= 0.0:
                dx = points[j, 0] - cx
                dy = points[j, 1] - cy
                dz = points[j, 2] - cz
                d = dx * dx + dy * dy + dz * dz
                if d < dist[j]:
                    dist[j] = d
            if dist[j] > best_d:
                best_d = dist[j]
                best = j
        idx[i] = best
        dist[best] = -1.0
        last = best
    return out


def knn(const double[:, ::1] points, const double[:, ::1] centers, Py_ssize_t k):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t g = centers.shape[0]
    cdef Py_ssize_t c, j, s, pos
    cdef double cx, cy, cz, dx, dy, dz, d
    out = np.empty((g, k), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] idx = out
    best_d_arr = np.empty(k, dtype=np.float64)
    cdef double[::1] best_d = best_d_arr
    cdef Py_ssize_t filled
    for c in range(g):
        cx = centers[c, 0]
        cy = centers[c, 1]
        cz = centers[c, 2]
        filled = 0
        for j in range(n):
            dx = points[j, 0] - cx
            dy = points[j, 1] - cy
            dz = points[j, 2] - cz
            d = dx * dx + dy * dy + dz * dz
            # candidates arrive in index order, so strict < keeps lower indices on ties
            if filled == k and not (d < best_d[k - 1]):
                continue
            pos = filled if filled < k else k - 1
            while pos > 0 and d < best_d[pos - 1]:
                if pos < k:
                    best_d[pos] = best_d[pos - 1]
                    idx[c, pos] = idx[c, pos - 1]
                pos -= 1
            best_d[pos] = d
            idx[c, pos] = j
            if filled < k:
                filled += 1
    return out
