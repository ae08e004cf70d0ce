"""Discrete maximum principle checks for cell-centered system matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

INVERSE_CAP = 2000

M_MATRIX = "monotone-by-M-matrix"
INVERSE = "monotone-by-inverse"
NON_MONOTONE = "non-monotone"


@dataclass
class MonotonicityReport:
    is_m_matrix: bool
    min_inverse_entry: float | None
    classification: str | None
    worst_offdiag: float
    min_diagonal: float
    min_diag_dominance: float

    def summary(self) -> str:
        lines = [f"M-matrix: {'yes' if self.is_m_matrix else 'no'}"]
        if self.min_inverse_entry is not None:
            lines.append(f"min inverse entry: {self.min_inverse_entry:.6e}")
        if self.classification is not None:
            lines.append(f"class: {self.classification}")
        return "\n".join(lines)


def monotonicity_check(A, mode: str = "m_matrix", tol: float = 1e-12) -> MonotonicityReport:
    """Sign-pattern test, optionally followed by a dense inverse-positivity test.

    ``mode="m_matrix"`` checks positive diagonal, nonpositive off-diagonals and
    weak row diagonal dominance (all relative to ``tol`` times the largest
    entry). ``mode="inverse_positivity"`` also inverts the matrix (n <= 2000).
    """
    if mode not in ("m_matrix", "inverse_positivity"):
        raise ValueError(f"unknown mode {mode!r}")
    A = sps.csr_matrix(A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValueError("matrix must be square")
    scale = abs(A).max() if A.nnz else 1.0
    diag = A.diagonal()
    off = A - sps.diags(diag)
    worst_off = float(off.max()) if off.nnz else 0.0
    dominance = diag - np.asarray(abs(off).sum(axis=1)).ravel()
    is_m = bool(diag.min() > tol * scale and worst_off <= tol * scale and dominance.min() >= -tol * scale)

    min_inv = None
    cls = M_MATRIX if is_m else None
    if mode == "inverse_positivity":
        if n > INVERSE_CAP:
            raise ValueError(f"inverse check limited to n <= {INVERSE_CAP}, got {n}")
        inv = np.linalg.inv(A.toarray())
        min_inv = float(inv.min())
        if not is_m:
            cls = INVERSE if min_inv >= -tol * np.abs(inv).max() else NON_MONOTONE
    return MonotonicityReport(is_m, min_inv, cls, worst_off, float(diag.min()), float(dominance.min()))
