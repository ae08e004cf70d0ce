# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: pivoted dense LU solves for the per-vertex local
systems and the sorted COO reduction behind global assembly.

Behaviour is identical to :mod:`mpxa._kernels_py`.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt
from libc.stdlib cimport free, malloc, qsort

cnp.import_array()


def lu_solve(A, B, double tol):
    """Solve ``A X = B`` with partial pivoting.

    Returns ``(X, worst, bad_row)``. ``worst`` is the smallest ratio of a pivot
    to the 2-norm of its original row; ``bad_row`` is the first original row
    whose pivot fell below ``tol`` times that norm (``-1`` if none), in which
    case ``X`` is undefined.
    """
    cdef double[:, ::1] a = np.array(A, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] x = np.array(B, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = x.shape[1]
    cdef Py_ssize_t i, j, k, p
    cdef double best, v, factor, piv, worst = 1.0
    cdef double[::1] norms = np.empty(n)
    cdef Py_ssize_t[::1] perm = np.arange(n, dtype=np.intp)
    cdef Py_ssize_t tmp
    if a.shape[1] != n or x.shape[0] != n:
        raise ValueError("lu_solve needs a square matrix and matching right-hand side")
    for i in range(n):
        v = 0.0
        for j in range(n):
            v += a[i, j] * a[i, j]
        norms[i] = sqrt(v)
    for k in range(n):
        p = k
        best = fabs(a[k, k])
        for i in range(k + 1, n):
            if fabs(a[i, k]) > best:
                best = fabs(a[i, k])
                p = i
        if p != k:
            for j in range(n):
                v = a[k, j]; a[k, j] = a[p, j]; a[p, j] = v
            for j in range(m):
                v = x[k, j]; x[k, j] = x[p, j]; x[p, j] = v
            tmp = perm[k]; perm[k] = perm[p]; perm[p] = tmp
        piv = a[k, k]
        if norms[perm[k]] == 0.0 or fabs(piv) <= tol * norms[perm[k]]:
            return np.asarray(x), 0.0, int(perm[k])
        v = fabs(piv) / norms[perm[k]]
        if v < worst:
            worst = v
        for i in range(k + 1, n):
            factor = a[i, k] / piv
            if factor != 0.0:
                a[i, k] = factor
                for j in range(k + 1, n):
                    a[i, j] -= factor * a[k, j]
                for j in range(m):
                    x[i, j] -= factor * x[k, j]
    for k in range(n - 1, -1, -1):
        piv = a[k, k]
        for j in range(m):
            v = x[k, j]
            for i in range(k + 1, n):
                v -= a[k, i] * x[i, j]
            x[k, j] = v / piv
    return np.asarray(x), worst, -1


ctypedef struct Entry:
    cnp.int64_t col
    double val


cdef int _entry_cmp(const void* a, const void* b) noexcept nogil:
    cdef const Entry* x = <const Entry*>a
    cdef const Entry* y = <const Entry*>b
    if x.col != y.col:
        return -1 if x.col < y.col else 1
    if x.val < y.val:
        return -1
    if x.val > y.val:
        return 1
    return 0


def coalesce(rows, cols, vals, Py_ssize_t nrows, Py_ssize_t ncols):
    """Sum duplicate coordinates; returns CSR ``(indptr, indices, data)``.

    Entries are reduced in (row, col, value) order so the result does not
    depend on the order in which the triplets arrived. Rows are bucketed by
    a counting sort and each row is sorted on its own.
    """
    cdef cnp.int64_t[::1] r = np.ascontiguousarray(rows, dtype=np.int64)
    cdef cnp.int64_t[::1] c = np.ascontiguousarray(cols, dtype=np.int64)
    cdef double[::1] v = np.ascontiguousarray(vals, dtype=np.float64)
    cdef Py_ssize_t n = r.shape[0]
    cdef Py_ssize_t i, k, start, stop, out = 0
    if c.shape[0] != n or v.shape[0] != n:
        raise ValueError("triplet arrays differ in length")
    for i in range(n):
        if r[i] < 0 or r[i] >= nrows or c[i] < 0 or c[i] >= ncols:
            raise IndexError(f"triplet ({r[i]}, {c[i]}) outside a {nrows}x{ncols} matrix")
    cdef cnp.int64_t[::1] start_of = np.zeros(nrows + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] fill = np.zeros(nrows, dtype=np.int64)
    cdef Entry* buf = <Entry*>malloc(max(n, 1) * sizeof(Entry))
    if buf == NULL:
        raise MemoryError()
    indptr_np = np.zeros(nrows + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] indptr = indptr_np
    cdef cnp.int64_t[::1] indices = np.empty(n, dtype=np.int64)
    cdef double[::1] sums = np.empty(n)
    try:
        with nogil:
            for i in range(n):
                start_of[r[i] + 1] += 1
            for k in range(nrows):
                start_of[k + 1] += start_of[k]
            for i in range(n):
                k = r[i]
                buf[start_of[k] + fill[k]].col = c[i]
                buf[start_of[k] + fill[k]].val = v[i]
                fill[k] += 1
            for k in range(nrows):
                start = start_of[k]
                stop = start_of[k + 1]
                if stop - start > 1:
                    qsort(&buf[start], stop - start, sizeof(Entry), _entry_cmp)
                for i in range(start, stop):
                    if i == start or buf[i].col != buf[i - 1].col:
                        indices[out] = buf[i].col
                        sums[out] = buf[i].val
                        out += 1
                    else:
                        sums[out - 1] += buf[i].val
                indptr[k + 1] = out
    finally:
        free(buf)
    return indptr_np, np.asarray(indices[:out]).copy(), np.asarray(sums[:out]).copy()
