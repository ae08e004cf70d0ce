"""Sparse matrices from triplet streams and a direct sparse solver.

Matrices are plain ``scipy.sparse.csr_matrix`` objects; assembly goes through
:func:`mpxa.kernels.coalesce` so duplicate entries are reduced in a fixed
order. The solver is SuperLU with a COLAMD fill-reducing ordering plus a few
steps of iterative refinement.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from mpxa.kernels import coalesce

logger = logging.getLogger(__name__)


class SingularMatrix(RuntimeError):
    """Raised when the direct factorization breaks down."""


class TripletBuffer:
    """Collects ``(row, col, value)`` blocks for one matrix."""

    def __init__(self, shape: tuple[int, int]):
        self.shape = shape
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []

    def add_block(self, rows, cols, block) -> None:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        block = np.asarray(block, dtype=float).reshape(len(rows), len(cols))
        self._rows.append(np.repeat(rows, len(cols)))
        self._cols.append(np.tile(cols, len(rows)))
        self._vals.append(block.ravel())

    def add(self, rows, cols, vals) -> None:
        self._rows.append(np.asarray(rows, dtype=np.int64).ravel())
        self._cols.append(np.asarray(cols, dtype=np.int64).ravel())
        self._vals.append(np.asarray(vals, dtype=float).ravel())

    def tocsr(self, drop_zeros: bool = True) -> sps.csr_matrix:
        if not self._rows:
            return sps.csr_matrix(self.shape)
        return assemble(
            (np.concatenate(self._rows), np.concatenate(self._cols), np.concatenate(self._vals)),
            self.shape,
            drop_zeros=drop_zeros,
        )


def assemble(
    triplets: tuple[np.ndarray, np.ndarray, np.ndarray] | Iterable[tuple[int, int, float]],
    dims: tuple[int, int],
    drop_zeros: bool = False,
) -> sps.csr_matrix:
    """Sum duplicate triplets into a CSR matrix independent of arrival order."""
    if isinstance(triplets, tuple) and len(triplets) == 3 and not np.isscalar(triplets[0]):
        rows, cols, vals = triplets
    else:
        items = list(triplets)
        if items:
            rows, cols, vals = (np.array(t) for t in zip(*items))
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
    indptr, indices, data = coalesce(rows, cols, vals, dims[0], dims[1])
    A = sps.csr_matrix((data, indices, indptr), shape=dims)
    if drop_zeros:
        A.eliminate_zeros()
    A.has_sorted_indices = True
    return A


def is_symmetric(A: sps.spmatrix, rtol: float = 1e-12) -> bool:
    norm = spla.norm(A)
    return norm == 0.0 or spla.norm(A - A.T) <= rtol * norm


@dataclass
class SolveReport:
    residual: float
    refinements: int


def solve_direct(
    A: sps.spmatrix, b: np.ndarray, rtol: float = 1e-9, max_refine: int = 3
) -> tuple[np.ndarray, SolveReport]:
    """Solve ``A x = b``; raises :class:`SingularMatrix` or on an unmet residual bound."""
    A = sps.csc_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix is not square: {A.shape}")
    b = np.asarray(b, dtype=float)
    if len(b) != A.shape[0]:
        raise ValueError(f"right-hand side has length {len(b)}, expected {A.shape[0]}")
    empty = np.flatnonzero(np.diff(A.indptr) == 0)
    if len(empty):
        raise SingularMatrix(f"structurally singular: column {empty[0]} is empty")
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularMatrix(f"factorization failed ({exc}); pivot diagnostic: {_pivot_hint(A)}") from exc
    x = lu.solve(b)
    bnorm = np.linalg.norm(b)
    scale = bnorm if bnorm > 0.0 else 1.0
    res = np.linalg.norm(b - A @ x) / scale
    steps = 0
    while res > rtol and steps < max_refine:
        x = x + lu.solve(b - A @ x)
        res = np.linalg.norm(b - A @ x) / scale
        steps += 1
    if not np.isfinite(res) or res > rtol:
        raise SingularMatrix(f"relative residual {res:.3e} exceeds {rtol:.1e}; pivot diagnostic: {_pivot_hint(A)}")
    return x, SolveReport(residual=float(res), refinements=steps)


def solve_bordered(
    A: sps.spmatrix, b: np.ndarray, basis: np.ndarray, rtol: float = 1e-9
) -> tuple[np.ndarray, SolveReport, np.ndarray]:
    """Solve a singular ``A x = b`` with ``basis.T x = 0``.

    ``basis`` (n x k) spans the right nullspace of ``A``. The system is bordered
    by ``basis`` so the multipliers absorb any incompatible part of ``b``;
    they are returned for inspection (zero for compatible data).
    """
    basis = np.atleast_2d(np.asarray(basis, dtype=float).T).T
    n, k = basis.shape
    scale = spla.norm(A, ord=1) / max(np.abs(basis).sum(axis=0).max(), 1e-300)
    B = sps.csr_matrix(basis * scale)
    K = sps.bmat([[A, B], [B.T, None]], format="csc")
    x, report = solve_direct(K, np.concatenate([b, np.zeros(k)]), rtol=rtol)
    return x[:n], report, x[n:] * scale


def _pivot_hint(A: sps.csc_matrix) -> str:
    d = np.abs(A.diagonal())
    i = int(np.argmin(d))
    return f"smallest diagonal |a[{i},{i}]| = {d[i]:.3e}"


def dump_coo(A: sps.spmatrix, path: str | Path, header: str | None = None) -> None:
    """Write ``i j value`` lines (17 significant digits)."""
    C = sps.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    lines = [] if header is None else [f"# {header}"]
    lines.append(f"# shape {A.shape[0]} {A.shape[1]}")
    lines += [f"{C.row[i]} {C.col[i]} {C.data[i]:.17g}" for i in order]
    Path(path).write_text("\n".join(lines) + "\n")


def load_coo(path: str | Path) -> sps.csr_matrix:
    shape = None
    rows, cols, vals = [], [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# shape"):
            shape = tuple(int(t) for t in line.split()[2:4])
        elif line and not line.startswith("#"):
            i, j, v = line.split()
            rows.append(int(i))
            cols.append(int(j))
            vals.append(float(v))
    if shape is None:
        shape = (max(rows) + 1, max(cols) + 1)
    return assemble((np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(vals)), shape)
