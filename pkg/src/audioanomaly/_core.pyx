# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled scoring kernels; semantics match audioanomaly._kernels
fallbacks exactly (tests assert agreement)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def pairwise_sqdist(a, b):
    """Squared euclidean distances [len(a), len(b)]."""
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], d = av.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, m))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                diff = av[i, k] - bv[j, k]
                acc += diff * diff
            ov[i, j] = acc
    return out


def kde_logdensity(train, query, double h):
    """Log mean isotropic-Gaussian kernel density at each query point."""
    cdef double[:, ::1] tv = np.ascontiguousarray(train, dtype=np.float64)
    cdef double[:, ::1] qv = np.ascontiguousarray(query, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0], d = tv.shape[1], nq = qv.shape[0]
    cdef double log_norm = -0.5 * d * log(2.0 * np.pi * h * h) - log(<double>n)
    cdef double inv2h2 = 1.0 / (2.0 * h * h)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(nq)
    cdef double[::1] ov = out
    cdef cnp.ndarray[cnp.float64_t, ndim=1] logk_arr = np.empty(n)
    cdef double[::1] logk = logk_arr
    cdef Py_ssize_t i, j, k
    cdef double acc, diff, m, s
    for i in range(nq):
        m = -1e308
        for j in range(n):
            acc = 0.0
            for k in range(d):
                diff = qv[i, k] - tv[j, k]
                acc += diff * diff
            logk[j] = -acc * inv2h2
            if logk[j] > m:
                m = logk[j]
        s = 0.0
        for j in range(n):
            s += exp(logk[j] - m)
        ov[i] = m + log(s) + log_norm
    return out


def iforest_path_lengths(features, thresholds, left, right, sizes, c_values, X):
    """Adjusted path length of each row of X through one flattened tree."""
    cdef int[::1] fv = np.ascontiguousarray(features, dtype=np.int32)
    cdef double[::1] tv = np.ascontiguousarray(thresholds, dtype=np.float64)
    cdef int[::1] lv = np.ascontiguousarray(left, dtype=np.int32)
    cdef int[::1] rv = np.ascontiguousarray(right, dtype=np.int32)
    cdef int[::1] sv = np.ascontiguousarray(sizes, dtype=np.int32)
    cdef double[::1] cv = np.ascontiguousarray(c_values, dtype=np.float64)
    cdef double[:, ::1] xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef int node, depth
    for i in range(n):
        node = 0
        depth = 0
        while fv[node] >= 0:
            if xv[i, fv[node]] < tv[node]:
                node = lv[node]
            else:
                node = rv[node]
            depth += 1
        ov[i] = depth + cv[sv[node]]
    return out
