"""Multi-point stress approximation for linear elasticity.

Stress ``pi = C : grad u + chi`` with isotropic C and an external cell tensor
``chi``. Face tractions are integrated over the face, oriented from the lower
to the higher cell index, and interleaved per face ``[w_x, w_y]``::

    w = W_u u + W_chi chi + W_bc bc

Displacements are interleaved per cell and ``chi`` is flattened row-major per
cell. In ``"weak"`` mode stress symmetry holds in dual-cell average; in
``"strong"`` mode C acts on the symmetric gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from mpxa.linsolve import SolveReport, solve_bordered, solve_direct
from mpxa.local_core import ElasticPhysics, discretize_local
from mpxa.mesh import DIRICHLET, SINGLE_POINT, Mesh, SubGrid

STRONG = "strong"
WEAK = "weak"


@dataclass(frozen=True)
class StressStencil:
    mesh: Mesh
    subgrid: SubGrid
    tags: np.ndarray
    mode: str
    mu: np.ndarray
    lam: np.ndarray
    W_u: sps.csr_matrix
    W_chi: sps.csr_matrix
    W_bc: sps.csr_matrix
    div: sps.csr_matrix
    grad_map: sps.csr_matrix
    grad_chi: sps.csr_matrix
    grad_bc: sps.csr_matrix
    stress_u: sps.csr_matrix
    stress_chi: sps.csr_matrix
    stress_bc: sps.csr_matrix

    @property
    def pure_neumann(self) -> bool:
        return not np.any(self.tags[self.mesh.boundary_faces] == DIRICHLET)

    def matrix(self) -> sps.csr_matrix:
        """Momentum balance matrix ``D_u W_u``."""
        return (self.div @ self.W_u).tocsr()


def discretize_elasticity(
    mesh: Mesh,
    subgrid: SubGrid,
    mu,
    lam,
    mode: str = WEAK,
    bc: np.ndarray | None = None,
    method: str | None = None,
) -> StressStencil:
    """Assemble MPSA traction stencils.

    Strong mode with a single-point rule solves the square local systems
    without fallback, so a singular vertex raises ``SingularLocalSystem``.
    """
    tags = mesh.face_tags if bc is None else np.asarray(bc)
    physics = ElasticPhysics.create(mu, lam, mesh.num_cells, mode)
    if method is None:
        if mode == STRONG:
            method = "direct" if subgrid.quadrature == SINGLE_POINT else "minimize"
        else:
            method = "auto"
    st = discretize_local(subgrid, physics, tags, method)
    return StressStencil(
        mesh=mesh,
        subgrid=subgrid,
        tags=tags,
        mode=mode,
        mu=physics.mu,
        lam=physics.lam,
        W_u=st.flux_u,
        W_chi=st.flux_chi,
        W_bc=st.flux_bc,
        div=mesh.divergence(2),
        grad_map=st.grad_u,
        grad_chi=st.grad_chi,
        grad_bc=st.grad_bc,
        stress_u=st.stress_u,
        stress_chi=st.stress_chi,
        stress_bc=st.stress_bc,
    )


def _vec(name: str, x, size: int) -> np.ndarray:
    if x is None:
        return np.zeros(size)
    x = np.asarray(x, dtype=float).ravel()
    if len(x) != size:
        raise ValueError(f"{name} has {len(x)} entries, expected {size}")
    return x


def _check_symmetric(chi: np.ndarray) -> None:
    t = chi.reshape(-1, 4)
    scale = max(np.abs(t).max(), 1.0)
    if np.any(np.abs(t[:, 1] - t[:, 2]) > 1e-12 * scale):
        raise ValueError("external stress chi must be symmetric in every cell")


def compute_tractions(st: StressStencil, u, chi=None, bc_data=None) -> np.ndarray:
    nc = st.mesh.num_cells
    u = _vec("u", u, 2 * nc)
    chi = _vec("chi", chi, 4 * nc)
    _check_symmetric(chi)
    bc_data = _vec("bc_data", bc_data, 2 * st.subgrid.num_boundary_subfaces)
    return st.W_u @ u + st.W_chi @ chi + st.W_bc @ bc_data


def subcell_stress(st: StressStencil, u, chi=None, bc_data=None) -> np.ndarray:
    """Condensed subcell stresses, shape (subcells, 4)."""
    nc = st.mesh.num_cells
    u = _vec("u", u, 2 * nc)
    chi = _vec("chi", chi, 4 * nc)
    bc_data = _vec("bc_data", bc_data, 2 * st.subgrid.num_boundary_subfaces)
    return (st.stress_u @ u + st.stress_chi @ chi + st.stress_bc @ bc_data).reshape(-1, 4)


def symmetry_residual(st: StressStencil, u, chi=None, bc_data=None) -> float:
    """Largest dual-cell volume-weighted asymmetry relative to the stress scale."""
    sg = st.subgrid
    pi = subcell_stress(st, u, chi, bc_data)
    asym = 0.5 * (pi[:, 1] - pi[:, 2]) * sg.subcell_volumes
    per_vertex = np.bincount(sg.subcell_vertex, weights=asym, minlength=st.mesh.num_vertices)
    scale = np.sqrt((sg.subcell_volumes[:, None] * pi**2).sum() / sg.subcell_volumes.sum())
    dual_vol = np.bincount(sg.subcell_vertex, weights=sg.subcell_volumes, minlength=st.mesh.num_vertices)
    ok = dual_vol > 0
    rel = np.abs(per_vertex[ok]) / dual_vol[ok]
    return float(rel.max() / scale) if scale > 0.0 else float(rel.max())


def rigid_modes(mesh: Mesh) -> np.ndarray:
    """Two translations and the rotation about the mesh centroid at cell centers."""
    nc = mesh.num_cells
    x = mesh.cell_centers - mesh.cell_centers.mean(axis=0)
    R = np.zeros((2 * nc, 3))
    R[0::2, 0] = 1.0
    R[1::2, 1] = 1.0
    R[0::2, 2] = -x[:, 1]
    R[1::2, 2] = x[:, 0]
    return R


def solve_elasticity(st: StressStencil, source, chi=None, bc_data=None) -> tuple[np.ndarray, SolveReport]:
    """Solve ``D_u w = source`` for cell displacements.

    Under pure traction conditions the rigid modes are removed by bordering.
    """
    nc = st.mesh.num_cells
    chi = _vec("chi", chi, 4 * nc)
    bc_data = _vec("bc_data", bc_data, 2 * st.subgrid.num_boundary_subfaces)
    rhs = _vec("source", source, 2 * nc) - st.div @ (st.W_chi @ chi + st.W_bc @ bc_data)
    A = st.matrix()
    if st.pure_neumann:
        u, report, _ = solve_bordered(A, rhs, rigid_modes(st.mesh) * np.repeat(st.mesh.cell_volumes, 2)[:, None])
        return u, report
    return solve_direct(A, rhs)
