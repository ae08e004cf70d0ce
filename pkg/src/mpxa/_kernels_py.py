"""Pure-Python fallback for :mod:`mpxa._kernels` (same signatures and results)."""
from __future__ import annotations

import numpy as np


def lu_solve(A, B, tol: float):
    a = np.array(A, dtype=float, copy=True)
    x = np.array(B, dtype=float, copy=True)
    n = a.shape[0]
    if a.shape[1] != n or x.shape[0] != n:
        raise ValueError("lu_solve needs a square matrix and matching right-hand side")
    norms = np.sqrt((a * a).sum(axis=1))
    perm = np.arange(n)
    worst = 1.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if p != k:
            a[[k, p]] = a[[p, k]]
            x[[k, p]] = x[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        piv = a[k, k]
        nrm = norms[perm[k]]
        if nrm == 0.0 or abs(piv) <= tol * nrm:
            return x, 0.0, int(perm[k])
        worst = min(worst, abs(piv) / nrm)
        factors = a[k + 1 :, k] / piv
        a[k + 1 :, k] = factors
        a[k + 1 :, k + 1 :] -= np.outer(factors, a[k, k + 1 :])
        x[k + 1 :] -= np.outer(factors, x[k])
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - a[k, k + 1 :] @ x[k + 1 :]) / a[k, k]
    return x, worst, -1


def coalesce(rows, cols, vals, nrows: int, ncols: int):
    r = np.ascontiguousarray(rows, dtype=np.int64)
    c = np.ascontiguousarray(cols, dtype=np.int64)
    v = np.ascontiguousarray(vals, dtype=float)
    if not (len(r) == len(c) == len(v)):
        raise ValueError("triplet arrays differ in length")
    bad = (r < 0) | (r >= nrows) | (c < 0) | (c >= ncols)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise IndexError(f"triplet ({r[i]}, {c[i]}) outside a {nrows}x{ncols} matrix")
    keys = r * ncols + c
    order = np.lexsort((v, keys))
    keys, v = keys[order], v[order]
    if len(keys) == 0:
        return np.zeros(nrows + 1, dtype=np.int64), keys, v
    starts = np.flatnonzero(np.concatenate([[True], keys[1:] != keys[:-1]]))
    # sequential sums per run, matching the compiled kernel bit for bit
    lengths = np.diff(np.append(starts, len(keys)))
    sums = v[starts].copy()
    for t in range(1, int(lengths.max())):
        live = lengths > t
        sums[live] += v[starts[live] + t]
    uk = keys[starts]
    indptr = np.zeros(nrows + 1, dtype=np.int64)
    np.cumsum(np.bincount(uk // ncols, minlength=nrows), out=indptr[1:])
    return indptr, uk % ncols, sums
