"""Two-point flux approximation, kept as a comparison baseline."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sps

from mpxa.local_core import _as_tensor_field
from mpxa.mesh import BOUNDARY, DIRICHLET, Mesh, SubGrid, build_subgrid
from mpxa.mpfa import FluxStencil


def _half_transmissibility(mesh: Mesh, kappa: np.ndarray, cells: np.ndarray, faces: np.ndarray) -> np.ndarray:
    d = mesh.face_centers[faces] - mesh.cell_centers[cells]
    dist2 = (d * d).sum(axis=1)
    if np.any(dist2 <= 1e-28):
        raise ValueError("degenerate center-to-face distance")
    kn = np.einsum("fij,fj->fi", kappa[cells], mesh.face_normals[faces])
    return mesh.face_areas[faces] * np.abs((kn * d).sum(axis=1)) / dist2


def tpfa_reference(mesh: Mesh, kappa, bc: np.ndarray | None = None, subgrid: SubGrid | None = None) -> FluxStencil:
    """Harmonic two-point transmissibilities in the :class:`FluxStencil` layout.

    Dirichlet data enter through the boundary subface entries of the same
    data vector used by MPFA (both halves of a face weighted equally).
    """
    tags = mesh.face_tags if bc is None else np.asarray(bc)
    subgrid = build_subgrid(mesh) if subgrid is None else subgrid
    kappa = _as_tensor_field(kappa, mesh.num_cells, "kappa")
    nf, nc = mesh.num_faces, mesh.num_cells
    lo, hi = mesh.face_cells[:, 0], mesh.face_cells[:, 1]
    faces = np.arange(nf)
    t_lo = _half_transmissibility(mesh, kappa, lo, faces)
    interior = hi != BOUNDARY
    t_hi = np.zeros(nf)
    t_hi[interior] = _half_transmissibility(mesh, kappa, hi[interior], faces[interior])

    trans = np.zeros(nf)
    trans[interior] = t_lo[interior] * t_hi[interior] / (t_lo[interior] + t_hi[interior])
    dmask = (~interior) & (tags == DIRICHLET)
    trans[dmask] = t_lo[dmask]

    rows = np.concatenate([faces[interior], faces[interior], faces[dmask]])
    cols = np.concatenate([lo[interior], hi[interior], lo[dmask]])
    vals = np.concatenate([trans[interior], -trans[interior], trans[dmask]])
    Q_p = sps.csr_matrix((vals, (rows, cols)), shape=(nf, nc))

    bsf = subgrid.boundary_subfaces
    bfaces = subgrid.subface_face[bsf]
    bidx = np.arange(len(bsf))
    d_b = tags[bfaces] == DIRICHLET
    vals = np.where(d_b, -0.5 * trans[bfaces], 1.0)
    Q_bc = sps.csr_matrix((vals, (bfaces, bidx)), shape=(nf, len(bsf)))
    return FluxStencil(
        mesh=mesh,
        subgrid=subgrid,
        tags=tags,
        Q_p=Q_p,
        Q_g=sps.csr_matrix((nf, 2 * nc)),
        Q_bc=Q_bc,
        div=mesh.divergence(),
        variant="tpfa",
    )
