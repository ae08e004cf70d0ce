"""Discrete L2 error metrics.

Cell quantities are compared with exact values at cell centers and measured
in ``sum_k m_k |v_k|^2``; face quantities are normal fluxes (tractions) per
unit length compared with the exact normal flux at face centers, measured in
``sum_f m_f^2 |v_f|^2``. All errors are relative to the norm of the exact
projection.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from mpxa.mesh import Mesh

COLUMNS = ("eps_u", "eps_p", "eps_pi", "eps_q", "eps_p_semi", "eps_up", "eps_Sigma")
EXTRA_COLUMNS = ("eps_phi", "eps_qphi", "eps_u_max")


@dataclass
class ErrorReport:
    h: float
    dofs: int
    eps_u: float = math.nan
    eps_p: float = math.nan
    eps_pi: float = math.nan
    eps_q: float = math.nan
    eps_p_semi: float = math.nan
    eps_up: float = math.nan
    eps_Sigma: float = math.nan
    eps_phi: float = math.nan
    eps_qphi: float = math.nan
    eps_u_max: float = math.nan

    def as_dict(self) -> dict:
        return asdict(self)


def cell_norm(mesh: Mesh, v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float).reshape(mesh.num_cells, -1)
    return float(np.sqrt((mesh.cell_volumes[:, None] * v**2).sum()))


def face_norm(mesh: Mesh, v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float).reshape(mesh.num_faces, -1)
    return float(np.sqrt((mesh.face_areas[:, None] ** 2 * v**2).sum()))


def _relative(err: float, ref: float) -> float:
    return err / ref if ref > 0.0 else err


def cell_error(mesh: Mesh, numerical, exact) -> float:
    exact = np.asarray(exact, dtype=float)
    return _relative(cell_norm(mesh, np.asarray(numerical).reshape(exact.shape) - exact), cell_norm(mesh, exact))


def face_error(mesh: Mesh, integrated, exact_density) -> float:
    """``integrated`` are face-integrated fluxes; ``exact_density`` per unit length."""
    exact = np.asarray(exact_density, dtype=float).reshape(mesh.num_faces, -1)
    num = np.asarray(integrated, dtype=float).reshape(mesh.num_faces, -1) / mesh.face_areas[:, None]
    return _relative(face_norm(mesh, num - exact), face_norm(mesh, exact))


def seminorm_error(mesh: Mesh, numerical, exact) -> float:
    """Relative cell error after removing the best constant shift."""
    diff = np.asarray(numerical, dtype=float) - np.asarray(exact, dtype=float)
    shift = np.average(diff, weights=mesh.cell_volumes)
    return _relative(cell_norm(mesh, diff - shift), cell_norm(mesh, exact))


def normal_density(mesh: Mesh, tensor_or_vector: np.ndarray) -> np.ndarray:
    """Exact flux vectors (faces, 2) or stresses (faces, 2, 2) dotted with face normals."""
    t = np.asarray(tensor_or_vector, dtype=float)
    if t.ndim == 2:
        return (t * mesh.face_normals).sum(axis=1)
    return np.einsum("fij,fj->fi", t, mesh.face_normals)


def error_metrics(case, mesh: Mesh, fields: dict, fluxes: dict, theta: float = 1.0, c: float = 1.0) -> ErrorReport:
    """Errors of the numerical fields against the case's exact solution.

    ``fields`` may hold ``u`` (interleaved), ``p``, ``phi``; ``fluxes`` may hold
    ``q`` (Darcy), ``w`` (tractions, interleaved), ``q_phi`` (heat), all
    face-integrated. Absent quantities give NaN and count as zero in the
    combined errors.
    """
    xc, xf = mesh.cell_centers, mesh.face_centers
    dofs = sum(len(np.asarray(v).ravel()) for v in fields.values())
    rep = ErrorReport(h=mesh.h, dofs=dofs)
    if "u" in fields:
        exact = case.u(xc)
        rep.eps_u = cell_error(mesh, fields["u"], exact)
        diff = np.asarray(fields["u"]).reshape(exact.shape) - exact
        rep.eps_u_max = float(np.abs(diff).max() / max(np.abs(exact).max(), 1e-300))
    if "p" in fields:
        exact = case.p(xc)
        rep.eps_p = cell_error(mesh, fields["p"], exact)
        rep.eps_p_semi = seminorm_error(mesh, fields["p"], exact)
    if "phi" in fields and case.phi is not None:
        rep.eps_phi = cell_error(mesh, fields["phi"], case.phi(xc))
    if "q" in fluxes:
        rep.eps_q = face_error(mesh, fluxes["q"], normal_density(mesh, case.flux(xf)))
    if "w" in fluxes:
        rep.eps_pi = face_error(mesh, fluxes["w"], normal_density(mesh, case.stress(xf)))
    if "q_phi" in fluxes and case.heat_flux is not None:
        rep.eps_qphi = face_error(mesh, fluxes["q_phi"], normal_density(mesh, case.heat_flux(xf)))

    def z(v: float) -> float:
        return 0.0 if math.isnan(v) else v

    rep.eps_up = z(rep.eps_u) + c * z(rep.eps_p)
    rep.eps_Sigma = z(rep.eps_u) + z(rep.eps_pi) + (theta + c) * z(rep.eps_p) + theta * z(rep.eps_q) + z(rep.eps_p_semi)
    return rep
