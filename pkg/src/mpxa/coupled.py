"""Biot and thermo-poroelastic block systems for one implicit step.

Unknowns are ordered field-major: displacement (interleaved per cell), then
pressure, then temperature. Mass and energy balances are cell-integrated::

    J_u u + (C + J_p) p + theta D q = r

where the J operators integrate ``alpha : grad u`` over subcells using the
condensed subcell gradients. These gradients depend on pressure (and
temperature) through the external stress ``chi = -alpha p``, which is where
J_p comes from.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sps

from mpxa.linsolve import SolveReport, solve_direct
from mpxa.mesh import BOUNDARY, Mesh, SubGrid
from mpxa.mpfa import FluxStencil, discretize_darcy
from mpxa.mpsa import WEAK, StressStencil, discretize_elasticity
from mpxa.local_core import _as_scalar_field, _as_tensor_field

logger = logging.getLogger(__name__)

FIELDS = ("u", "p", "phi")


class NonConvergence(RuntimeError):
    def __init__(self, message: str, fields: dict, history: list[float]):
        super().__init__(message)
        self.fields = fields
        self.history = history


def _symmetric(a: np.ndarray, name: str) -> np.ndarray:
    if not np.allclose(a, a.transpose(0, 2, 1)):
        raise ValueError(f"{name} must be symmetric")
    return a


@dataclass(frozen=True)
class BiotParams:
    alpha: np.ndarray
    c: np.ndarray
    theta: float
    kappa: np.ndarray
    mu: np.ndarray
    lam: np.ndarray

    @classmethod
    def create(cls, nc: int, alpha=1.0, c=1.0, theta=1.0, kappa=1.0, mu=1.0, lam=1.0) -> "BiotParams":
        c = _as_scalar_field(c, nc, "c")
        if np.any(c < 0.0) or theta < 0.0:
            raise ValueError("need c >= 0 and theta >= 0")
        return cls(
            alpha=_symmetric(_as_tensor_field(alpha, nc, "alpha"), "alpha"),
            c=c,
            theta=float(theta),
            kappa=_as_tensor_field(kappa, nc, "kappa"),
            mu=_as_scalar_field(mu, nc, "mu"),
            lam=_as_scalar_field(lam, nc, "lam"),
        )


@dataclass(frozen=True)
class ThermoParams:
    alpha_p: np.ndarray
    alpha_phi: np.ndarray
    c_pp: np.ndarray
    c_pphi: np.ndarray
    c_phip: np.ndarray
    c_phiphi: np.ndarray
    kappa_p: np.ndarray
    kappa_phi: np.ndarray
    theta: float
    mu: np.ndarray
    lam: np.ndarray

    @classmethod
    def create(
        cls,
        nc: int,
        alpha_p=1.0,
        alpha_phi=1.0,
        c_pp=1.0,
        c_pphi=1.0,
        c_phip=1.0,
        c_phiphi=1.0,
        kappa_p=1.0,
        kappa_phi=1.0,
        theta=1.0,
        mu=1.0,
        lam=1.0,
    ) -> "ThermoParams":
        if theta < 0.0:
            raise ValueError("need theta >= 0")
        return cls(
            alpha_p=_symmetric(_as_tensor_field(alpha_p, nc, "alpha_p"), "alpha_p"),
            alpha_phi=_symmetric(_as_tensor_field(alpha_phi, nc, "alpha_phi"), "alpha_phi"),
            c_pp=_as_scalar_field(c_pp, nc, "c_pp"),
            c_pphi=_as_scalar_field(c_pphi, nc, "c_pphi"),
            c_phip=_as_scalar_field(c_phip, nc, "c_phip"),
            c_phiphi=_as_scalar_field(c_phiphi, nc, "c_phiphi"),
            kappa_p=_as_tensor_field(kappa_p, nc, "kappa_p"),
            kappa_phi=_as_tensor_field(kappa_phi, nc, "kappa_phi"),
            theta=float(theta),
            mu=_as_scalar_field(mu, nc, "mu"),
            lam=_as_scalar_field(lam, nc, "lam"),
        )

    def biot(self) -> BiotParams:
        return BiotParams(self.alpha_p, self.c_pp, self.theta, self.kappa_p, self.mu, self.lam)


@dataclass
class BlockSystem:
    sizes: dict[str, int]
    blocks: dict[tuple[str, str], sps.csr_matrix]
    rhs: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def fields(self) -> tuple[str, ...]:
        return tuple(f for f in FIELDS if f in self.sizes)

    def block(self, row: str, col: str) -> sps.csr_matrix:
        b = self.blocks.get((row, col))
        return sps.csr_matrix((self.sizes[row], self.sizes[col])) if b is None else b

    def matrix(self, extra: dict | None = None) -> sps.csr_matrix:
        extra = extra or {}
        grid = []
        for r in self.fields:
            row = []
            for c in self.fields:
                b = self.block(r, c)
                if (r, c) in extra:
                    b = b + extra[(r, c)]
                row.append(b)
            grid.append(row)
        return sps.bmat(grid, format="csr")

    def vector(self, extra: dict | None = None) -> np.ndarray:
        extra = extra or {}
        return np.concatenate(
            [self.rhs.get(f, np.zeros(self.sizes[f])) + extra.get(f, 0.0) for f in self.fields]
        )

    def split(self, x: np.ndarray) -> dict[str, np.ndarray]:
        out, start = {}, 0
        for f in self.fields:
            out[f] = x[start : start + self.sizes[f]]
            start += self.sizes[f]
        return out


def _chi_map(alpha: np.ndarray) -> sps.csr_matrix:
    """Cell values to external stress ``chi = -alpha * value`` (row-major per cell)."""
    nc = len(alpha)
    rows = np.arange(4 * nc)
    cols = np.repeat(np.arange(nc), 4)
    return sps.csr_matrix((-alpha.reshape(-1), (rows, cols)), shape=(4 * nc, nc))


def _volume_contraction(subgrid: SubGrid, alpha: np.ndarray) -> sps.csr_matrix:
    """Cells x (subcells*4): volume-weighted ``alpha_k : G`` summed over subcells of k."""
    sc_cell = subgrid.subcell_cell
    nsc = len(sc_cell)
    rows = np.repeat(sc_cell, 4)
    cols = np.arange(4 * nsc)
    vals = (alpha[sc_cell].reshape(nsc, 4) * subgrid.subcell_volumes[:, None]).ravel()
    return sps.csr_matrix((vals, (rows, cols)), shape=(subgrid.mesh.num_cells, 4 * nsc))


@dataclass(frozen=True)
class CouplingOperators:
    """Maps from one scalar field to momentum and to a balance equation."""

    W: sps.csr_matrix
    chi: sps.csr_matrix


@dataclass
class BiotDiscretization:
    system: BlockSystem
    flow: FluxStencil
    mech: StressStencil
    params: BiotParams
    W_p: sps.csr_matrix
    J_u: sps.csr_matrix
    J_p: sps.csr_matrix
    J_bc: sps.csr_matrix

    def set_rhs(self, r_u, r_p, bc_u=None, bc_p=None, g=None) -> None:
        """Fold cell-integrated sources and boundary data into the right-hand side."""
        mesh = self.flow.mesh
        nb = self.flow.subgrid.num_boundary_subfaces
        bc_u = np.zeros(2 * nb) if bc_u is None else np.asarray(bc_u, dtype=float)
        bc_p = np.zeros(nb) if bc_p is None else np.asarray(bc_p, dtype=float)
        g = np.zeros(2 * mesh.num_cells) if g is None else np.asarray(g, dtype=float).ravel()
        th = self.params.theta
        self.system.rhs = {
            "u": np.asarray(r_u, dtype=float) - self.mech.div @ (self.mech.W_bc @ bc_u),
            "p": np.asarray(r_p, dtype=float)
            - th * (self.flow.div @ (self.flow.Q_g @ g + self.flow.Q_bc @ bc_p))
            - self.J_bc @ bc_u,
        }

    def fluxes(self, p, bc_p=None, g=None) -> np.ndarray:
        nb = self.flow.subgrid.num_boundary_subfaces
        bc_p = np.zeros(nb) if bc_p is None else bc_p
        g = np.zeros(2 * self.flow.mesh.num_cells) if g is None else np.asarray(g).ravel()
        return self.flow.Q_p @ p + self.flow.Q_g @ g + self.flow.Q_bc @ bc_p

    def tractions(self, u, p, bc_u=None) -> np.ndarray:
        nb = self.flow.subgrid.num_boundary_subfaces
        bc_u = np.zeros(2 * nb) if bc_u is None else bc_u
        return self.mech.W_u @ u + self.W_p @ p + self.mech.W_bc @ bc_u

    def solve(self, solver=solve_direct) -> tuple[dict[str, np.ndarray], SolveReport]:
        x, report = solver(self.system.matrix(), self.system.vector())
        return self.system.split(x), report


def discretize_biot(
    mesh: Mesh,
    subgrid: SubGrid,
    params: BiotParams,
    bc_flow: np.ndarray | None = None,
    bc_mech: np.ndarray | None = None,
    mode: str = WEAK,
    mech_subgrid: SubGrid | None = None,
) -> BiotDiscretization:
    """Blocks ``(u,u)=D_u W_u``, ``(u,p)=D_u W_p``, ``(p,u)=J_u``,
    ``(p,p)=C + theta D_p Q_p + J_p``."""
    flow = discretize_darcy(mesh, subgrid, params.kappa, bc_flow)
    mech = discretize_elasticity(mesh, mech_subgrid or subgrid, params.mu, params.lam, mode, bc_mech)
    return _biot_from(flow, mech, params)


def _biot_from(flow: FluxStencil, mech: StressStencil, params: BiotParams) -> BiotDiscretization:
    mesh = flow.mesh
    A = _chi_map(params.alpha)
    M = _volume_contraction(mech.subgrid, params.alpha)
    W_p = (mech.W_chi @ A).tocsr()
    J_u = (M @ mech.grad_map).tocsr()
    J_p = (M @ mech.grad_chi @ A).tocsr()
    J_bc = (M @ mech.grad_bc).tocsr()
    C = sps.diags(params.c * mesh.cell_volumes)
    blocks = {
        ("u", "u"): mech.matrix(),
        ("u", "p"): (mech.div @ W_p).tocsr(),
        ("p", "u"): J_u,
        ("p", "p"): (C + params.theta * flow.matrix() + J_p).tocsr(),
    }
    system = BlockSystem({"u": 2 * mesh.num_cells, "p": mesh.num_cells}, blocks)
    return BiotDiscretization(system, flow, mech, params, W_p, J_u, J_p, J_bc)


# -- thermo-poroelasticity -------------------------------------------------------


def upstream_selector(q: np.ndarray, mesh: Mesh) -> sps.csr_matrix:
    """Faces x cells selector of the upstream cell.

    Row of face ``f`` picks the lower cell when ``q_f >= 0`` and the higher
    cell otherwise. Boundary faces with inflow (``q_f < 0``) have an empty row;
    their value comes from boundary data.
    """
    q = np.asarray(q, dtype=float)
    lo, hi = mesh.face_cells[:, 0], mesh.face_cells[:, 1]
    pick = np.where(q >= 0.0, lo, hi)
    rows = np.flatnonzero(pick != BOUNDARY)
    return sps.csr_matrix(
        (np.ones(len(rows)), (rows, pick[rows])), shape=(mesh.num_faces, mesh.num_cells)
    )


@dataclass
class AdvectionHook:
    """Re-evaluates the advective heat flux ``phi* q_p`` for a frozen iterate.

    The Darcy flux is ``q_p = Q_p p + q_fixed`` with ``q_fixed`` collecting the
    gravity and boundary-data parts. ``phi_boundary`` gives the temperature on
    boundary faces, used where fluid enters the domain.
    """

    flow: FluxStencil
    theta: float
    phi_boundary: np.ndarray
    q_fixed: np.ndarray
    enabled: bool = True

    def face_temperatures(self, phi: np.ndarray, q: np.ndarray) -> np.ndarray:
        mesh = self.flow.mesh
        U = upstream_selector(q, mesh)
        out = U @ phi
        inflow = (mesh.face_cells[:, 1] == BOUNDARY) & (q < 0.0)
        out[inflow] = self.phi_boundary[inflow]
        return out

    def linearize(self, phi: np.ndarray, q: np.ndarray) -> tuple[sps.csr_matrix, np.ndarray]:
        """``(phi, p)`` block and right-hand-side shift for frozen ``phi*``."""
        nc = self.flow.mesh.num_cells
        if not self.enabled:
            return sps.csr_matrix((nc, nc)), np.zeros(nc)
        star = sps.diags(self.face_temperatures(phi, q))
        block = (self.theta * (self.flow.div @ star @ self.flow.Q_p)).tocsr()
        shift = -self.theta * (self.flow.div @ (star @ self.q_fixed))
        return block, shift


@dataclass
class ThermoDiscretization:
    system: BlockSystem
    flow: FluxStencil
    heat: FluxStencil
    mech: StressStencil
    params: ThermoParams
    W_p: sps.csr_matrix
    W_phi: sps.csr_matrix
    J: dict[tuple[str, str], sps.csr_matrix]
    J_bc: dict[str, sps.csr_matrix]
    hook: AdvectionHook | None = None

    def set_rhs(self, r_u, r_p, r_phi, bc_u=None, bc_p=None, bc_phi=None, g=None, phi_boundary=None, advection=True) -> None:
        mesh = self.flow.mesh
        nb = self.flow.subgrid.num_boundary_subfaces
        nc = mesh.num_cells
        bc_u = np.zeros(2 * nb) if bc_u is None else np.asarray(bc_u, dtype=float)
        bc_p = np.zeros(nb) if bc_p is None else np.asarray(bc_p, dtype=float)
        bc_phi = np.zeros(nb) if bc_phi is None else np.asarray(bc_phi, dtype=float)
        g = np.zeros(2 * nc) if g is None else np.asarray(g, dtype=float).ravel()
        th = self.params.theta
        q_fixed = self.flow.Q_g @ g + self.flow.Q_bc @ bc_p
        self.system.rhs = {
            "u": np.asarray(r_u, dtype=float) - self.mech.div @ (self.mech.W_bc @ bc_u),
            "p": np.asarray(r_p, dtype=float) - th * (self.flow.div @ q_fixed) - self.J_bc["p"] @ bc_u,
            "phi": np.asarray(r_phi, dtype=float)
            - th * (self.heat.div @ (self.heat.Q_bc @ bc_phi))
            - self.J_bc["phi"] @ bc_u,
        }
        phi_b = np.zeros(mesh.num_faces) if phi_boundary is None else np.asarray(phi_boundary, dtype=float)
        self.hook = AdvectionHook(self.flow, th, phi_b, q_fixed, enabled=advection)

    def fluxes(self, p) -> np.ndarray:
        return self.flow.Q_p @ p + self.hook.q_fixed

    def heat_fluxes(self, phi, p, bc_phi=None) -> np.ndarray:
        nb = self.flow.subgrid.num_boundary_subfaces
        bc_phi = np.zeros(nb) if bc_phi is None else bc_phi
        q = self.fluxes(p)
        cond = self.heat.Q_p @ phi + self.heat.Q_bc @ bc_phi
        if not self.hook.enabled:
            return cond
        return cond + self.hook.face_temperatures(phi, q) * q

    def tractions(self, u, p, phi, bc_u=None) -> np.ndarray:
        nb = self.flow.subgrid.num_boundary_subfaces
        bc_u = np.zeros(2 * nb) if bc_u is None else bc_u
        return self.mech.W_u @ u + self.W_p @ p + self.W_phi @ phi + self.mech.W_bc @ bc_u


def discretize_thermo(
    mesh: Mesh,
    subgrid: SubGrid,
    params: ThermoParams,
    bc_flow: np.ndarray | None = None,
    bc_heat: np.ndarray | None = None,
    bc_mech: np.ndarray | None = None,
    mode: str = WEAK,
) -> ThermoDiscretization:
    """All nine blocks except the advective ``(phi, p)`` part, which lives in
    the returned hook once :meth:`ThermoDiscretization.set_rhs` is called."""
    flow = discretize_darcy(mesh, subgrid, params.kappa_p, bc_flow)
    heat = discretize_darcy(mesh, subgrid, params.kappa_phi, bc_heat)
    mech = discretize_elasticity(mesh, subgrid, params.mu, params.lam, mode, bc_mech)
    th = params.theta
    vol = mesh.cell_volumes
    A_p, A_phi = _chi_map(params.alpha_p), _chi_map(params.alpha_phi)
    M_p = _volume_contraction(subgrid, params.alpha_p)
    M_phi = _volume_contraction(subgrid, params.alpha_phi)
    W_p = (mech.W_chi @ A_p).tocsr()
    W_phi = (mech.W_chi @ A_phi).tocsr()
    J = {
        ("p", "u"): M_p @ mech.grad_map,
        ("p", "p"): M_p @ mech.grad_chi @ A_p,
        ("p", "phi"): M_p @ mech.grad_chi @ A_phi,
        ("phi", "u"): M_phi @ mech.grad_map,
        ("phi", "p"): M_phi @ mech.grad_chi @ A_p,
        ("phi", "phi"): M_phi @ mech.grad_chi @ A_phi,
    }
    J = {k: v.tocsr() for k, v in J.items()}
    J_bc = {"p": (M_p @ mech.grad_bc).tocsr(), "phi": (M_phi @ mech.grad_bc).tocsr()}
    D = sps.diags
    blocks = {
        ("u", "u"): mech.matrix(),
        ("u", "p"): (mech.div @ W_p).tocsr(),
        ("u", "phi"): (mech.div @ W_phi).tocsr(),
        ("p", "u"): J[("p", "u")],
        ("p", "p"): (D(params.c_pp * vol) + th * flow.matrix() + J[("p", "p")]).tocsr(),
        ("p", "phi"): (D(params.c_pphi * vol) + J[("p", "phi")]).tocsr(),
        ("phi", "u"): J[("phi", "u")],
        ("phi", "p"): (D(params.c_phip * vol) + J[("phi", "p")]).tocsr(),
        ("phi", "phi"): (D(params.c_phiphi * vol) + th * heat.matrix() + J[("phi", "phi")]).tocsr(),
    }
    nc = mesh.num_cells
    system = BlockSystem({"u": 2 * nc, "p": nc, "phi": nc}, blocks)
    disc = ThermoDiscretization(system, flow, heat, mech, params, W_p, W_phi, J, J_bc)
    disc.set_rhs(np.zeros(2 * nc), np.zeros(nc), np.zeros(nc))
    return disc


@dataclass
class PicardReport:
    iterations: int
    history: list[float]
    residual: float


def picard_solve(
    disc: ThermoDiscretization,
    solver: Callable = solve_direct,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> tuple[dict[str, np.ndarray], PicardReport]:
    """Frozen-coefficient iteration on the advective heat flux.

    Each step freezes the upstream temperatures from the previous iterate,
    solves the linear system, and stops when the relative change of every
    field falls below ``tol``.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    sys_ = disc.system
    fields = {f: np.zeros(sys_.sizes[f]) for f in sys_.fields}
    history: list[float] = []
    for it in range(1, max_iter + 1):
        q = disc.fluxes(fields["p"])
        block, shift = disc.hook.linearize(fields["phi"], q)
        A = sys_.matrix({("phi", "p"): block})
        b = sys_.vector({"phi": shift})
        x, report = solver(A, b)
        new = sys_.split(x)
        change = max(
            np.linalg.norm(new[f] - fields[f]) / max(np.linalg.norm(new[f]), 1e-300) for f in sys_.fields
        )
        history.append(float(change))
        fields = new
        if change < tol or not disc.hook.enabled:
            # with advection off the system is linear and one solve is exact
            q = disc.fluxes(fields["p"])
            block, shift = disc.hook.linearize(fields["phi"], q)
            A = sys_.matrix({("phi", "p"): block})
            b = sys_.vector({"phi": shift})
            res = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
            logger.info("picard converged in %d iterations", it)
            return fields, PicardReport(it, history, float(res))
    raise NonConvergence(f"no convergence in {max_iter} iterations (last change {history[-1]:.3e})", fields, history)
