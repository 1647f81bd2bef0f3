# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled RBF kernel loops; mirrors the signatures in ``_rbf_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

from . import _rbf_py

cnp.import_array()

# above this many entries the BLAS-backed numpy expansion is faster
cdef Py_ssize_t GRAM_LOOP_MAX = 2048


cdef inline double _quad(const double* P, const double* d, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc = 0.0, row
    for i in range(n):
        row = 0.0
        for j in range(n):
            row += P[i * n + j] * d[j]
        acc += d[i] * row
    return acc


def rbf_gram(X1, X2, P, double s):
    cdef const double[:, ::1] a = np.ascontiguousarray(X1, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(X2, dtype=np.float64)
    cdef const double[:, ::1] p = np.ascontiguousarray(P, dtype=np.float64)
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], n = a.shape[1]
    if b.shape[1] != n or p.shape[0] != n or p.shape[1] != n:
        raise ValueError("dimension mismatch")
    if na * nb > GRAM_LOOP_MAX:
        return _rbf_py.rbf_gram(a, b, p, s)
    q = np.empty((na, nb), dtype=np.float64)
    cdef double[:, ::1] o = q
    cdef double[::1] d = np.empty(max(n, 1), dtype=np.float64)
    cdef Py_ssize_t i, j, t
    with nogil:
        for i in range(na):
            for j in range(nb):
                for t in range(n):
                    d[t] = a[i, t] - b[j, t]
                o[i, j] = -0.5 * _quad(&p[0, 0], &d[0], n)
    # numpy's vectorized exp beats a scalar libm call per entry
    np.exp(q, out=q)
    q *= s
    return q


def rbf_grad(x, X2, P, double s):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(X2, dtype=np.float64)
    cdef const double[:, ::1] p = np.ascontiguousarray(P, dtype=np.float64)
    cdef Py_ssize_t nb = b.shape[0], n = xv.shape[0]
    if b.shape[1] != n or p.shape[0] != n:
        raise ValueError("dimension mismatch")
    out = np.empty((nb, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[::1] d = np.empty(max(n, 1), dtype=np.float64)
    cdef Py_ssize_t j, t, u
    cdef double k, pd
    with nogil:
        for j in range(nb):
            for t in range(n):
                d[t] = xv[t] - b[j, t]
            k = s * exp(-0.5 * _quad(&p[0, 0], &d[0], n))
            for t in range(n):
                pd = 0.0
                for u in range(n):
                    pd += p[t, u] * d[u]
                o[j, t] = -pd * k
    return out


def rbf_cross_hess(x, X2, P, double s):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(X2, dtype=np.float64)
    cdef const double[:, ::1] p = np.ascontiguousarray(P, dtype=np.float64)
    cdef Py_ssize_t nb = b.shape[0], n = xv.shape[0]
    if b.shape[1] != n or p.shape[0] != n:
        raise ValueError("dimension mismatch")
    out = np.empty((nb, n, n), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef double[::1] d = np.empty(max(n, 1), dtype=np.float64)
    cdef double[::1] pd = np.empty(max(n, 1), dtype=np.float64)
    cdef Py_ssize_t j, t, u
    cdef double k
    with nogil:
        for j in range(nb):
            for t in range(n):
                d[t] = xv[t] - b[j, t]
            for t in range(n):
                pd[t] = 0.0
                for u in range(n):
                    pd[t] += p[t, u] * d[u]
            k = 0.0
            for t in range(n):
                k += d[t] * pd[t]
            k = s * exp(-0.5 * k)
            for t in range(n):
                for u in range(n):
                    o[j, t, u] = k * (p[t, u] - pd[t] * pd[u])
    return out
