"""Multi-point flux approximation for Darcy flow.

The flux law is ``tau = -kappa grad p + g`` with ``g`` constant per cell.
Face fluxes are integrated over the face and oriented from the lower to the
higher cell index (outward on the boundary)::

    q = Q_p p + Q_g g + Q_bc bc

where ``bc`` stacks Dirichlet potentials and integrated Neumann fluxes per
boundary subface (see :mod:`mpxa.boundary`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from mpxa.boundary import column_mask
from mpxa.linsolve import SolveReport, solve_bordered, solve_direct
from mpxa.local_core import ScalarPhysics, discretize_local
from mpxa.mesh import DIRICHLET, FULL_QUADRATIC, NEUMANN, Mesh, SubGrid


@dataclass(frozen=True)
class FluxStencil:
    mesh: Mesh
    subgrid: SubGrid
    tags: np.ndarray
    Q_p: sps.csr_matrix
    Q_g: sps.csr_matrix
    Q_bc: sps.csr_matrix
    div: sps.csr_matrix
    variant: str
    grad_p: sps.csr_matrix | None = None
    grad_g: sps.csr_matrix | None = None
    grad_bc: sps.csr_matrix | None = None

    @property
    def Q_D(self) -> sps.csr_matrix:
        return self.Q_bc @ sps.diags(column_mask(self.subgrid, self.tags, DIRICHLET).astype(float))

    @property
    def Q_N(self) -> sps.csr_matrix:
        return self.Q_bc @ sps.diags(column_mask(self.subgrid, self.tags, NEUMANN).astype(float))

    @property
    def pure_neumann(self) -> bool:
        return not np.any(self.tags[self.mesh.boundary_faces] == DIRICHLET)

    def matrix(self) -> sps.csr_matrix:
        """Cell balance matrix ``D Q_p``."""
        return (self.div @ self.Q_p).tocsr()


def discretize_darcy(
    mesh: Mesh,
    subgrid: SubGrid,
    kappa,
    bc: np.ndarray | None = None,
    method: str = "auto",
) -> FluxStencil:
    """Assemble MPFA flux stencils.

    ``kappa`` is a 2x2 tensor, a scalar, or one tensor per cell; ``bc`` is an
    optional per-face tag array overriding the mesh tags.
    """
    tags = mesh.face_tags if bc is None else np.asarray(bc)
    physics = ScalarPhysics.create(kappa, mesh.num_cells)
    st = discretize_local(subgrid, physics, tags, method)
    variant = "generalized" if subgrid.quadrature == FULL_QUADRATIC else f"O({subgrid.eta:g})"
    return FluxStencil(
        mesh=mesh,
        subgrid=subgrid,
        tags=tags,
        Q_p=st.flux_u,
        Q_g=st.flux_chi,
        Q_bc=st.flux_bc,
        div=mesh.divergence(),
        variant=variant,
        grad_p=st.grad_u,
        grad_g=st.grad_chi,
        grad_bc=st.grad_bc,
    )


def _check(name: str, x: np.ndarray | None, size: int) -> np.ndarray:
    if x is None:
        return np.zeros(size)
    x = np.asarray(x, dtype=float).ravel()
    if len(x) != size:
        raise ValueError(f"{name} has {len(x)} entries, expected {size}")
    return x


def compute_fluxes(st: FluxStencil, p, g=None, bc_data=None) -> np.ndarray:
    nc = st.mesh.num_cells
    p = _check("p", p, nc)
    g = _check("g", g, 2 * nc)
    bc_data = _check("bc_data", bc_data, st.subgrid.num_boundary_subfaces)
    return st.Q_p @ p + st.Q_g @ g + st.Q_bc @ bc_data


def solve_darcy(st: FluxStencil, source, g=None, bc_data=None) -> tuple[np.ndarray, SolveReport]:
    """Solve ``D q = source`` (cell-integrated sources) for cell pressures.

    Without Dirichlet faces the mean pressure is fixed to zero by bordering
    the matrix with the constant vector.
    """
    nc = st.mesh.num_cells
    g = _check("g", g, 2 * nc)
    bc_data = _check("bc_data", bc_data, st.subgrid.num_boundary_subfaces)
    rhs = _check("source", source, nc) - st.div @ (st.Q_g @ g + st.Q_bc @ bc_data)
    A = st.matrix()
    if st.pure_neumann:
        p, report, _ = solve_bordered(A, rhs, st.mesh.cell_volumes[:, None])
        return p, report
    return solve_direct(A, rhs)
