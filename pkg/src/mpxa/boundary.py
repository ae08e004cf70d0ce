"""Boundary data vectors indexed by boundary subface.

Dirichlet subfaces carry the potential at their continuity point; Neumann
subfaces carry the normal flux (or traction) integrated over the subface,
with the outward face normal. Both kinds share one vector of length
``num_boundary_subfaces * d``.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from mpxa.mesh import DIRICHLET, NEUMANN, SubGrid

_GAUSS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])

Field = Callable[[np.ndarray], np.ndarray]
NormalFlux = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _columns(values: np.ndarray, n: int, d: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return values.reshape(n, d)


def boundary_data(
    subgrid: SubGrid,
    tags: np.ndarray | None = None,
    value: Field | None = None,
    flux: NormalFlux | None = None,
    d: int = 1,
) -> np.ndarray:
    """Evaluate boundary data for every boundary subface.

    ``value(points)`` returns potentials (shape ``(n,)`` or ``(n, d)``);
    ``flux(points, normals)`` returns normal flux densities of the same shape.
    Missing callables mean homogeneous data.
    """
    mesh = subgrid.mesh
    tags = mesh.face_tags if tags is None else np.asarray(tags)
    bsf = subgrid.boundary_subfaces
    faces = subgrid.subface_face[bsf]
    out = np.zeros((len(bsf), d))

    dmask = tags[faces] == DIRICHLET
    if value is not None and dmask.any():
        pts = subgrid.continuity_points[bsf[dmask]]
        out[dmask] = _columns(value(pts), len(pts), d)

    nmask = tags[faces] == NEUMANN
    if flux is not None and nmask.any():
        sf = bsf[nmask]
        f = faces[nmask]
        a = mesh.face_centers[f]
        b = subgrid.mesh.vertices[subgrid.subface_vertex[sf]]
        normals = mesh.face_normals[f]
        total = np.zeros((len(sf), d))
        for t in _GAUSS:
            pts = a + t * (b - a)
            total += 0.5 * _columns(flux(pts, normals), len(sf), d)
        out[nmask] = total * subgrid.subface_areas[sf][:, None]
    return out.ravel()


def column_mask(subgrid: SubGrid, tags: np.ndarray, kind: int, d: int = 1) -> np.ndarray:
    """Boolean mask over boundary-data entries belonging to faces tagged ``kind``."""
    faces = subgrid.subface_face[subgrid.boundary_subfaces]
    return np.repeat(np.asarray(tags)[faces] == kind, d)
