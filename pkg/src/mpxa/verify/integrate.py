"""Cell integrals of pointwise functions on polygonal meshes.

Each cell is split into the fan of triangles (x_k, v_i, v_i+1); every
triangle uses the 7-point degree-5 rule.
"""
from __future__ import annotations

import numpy as np

from mpxa.mesh import Mesh

_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_A1, _B1, _B1],
        [_B1, _A1, _B1],
        [_B1, _B1, _A1],
        [_A2, _B2, _B2],
        [_B2, _A2, _B2],
        [_B2, _B2, _A2],
    ]
)
_W = np.array([0.225, *[0.132394152788506] * 3, *[0.125939180544827] * 3])


def fan_quadrature(mesh: Mesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadrature points, weights (area-scaled) and owning cell of each point."""
    loops = mesh.cells
    counts = np.array([len(loop) for loop in loops])
    owner = np.repeat(np.arange(mesh.num_cells), counts)
    a = np.repeat(mesh.cell_centers, counts, axis=0)
    b = mesh.vertices[np.concatenate(loops)]
    c = mesh.vertices[np.concatenate([np.roll(loop, -1) for loop in loops])]
    area = 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    pts = _BARY[None, :, 0, None] * a[:, None] + _BARY[None, :, 1, None] * b[:, None] + _BARY[None, :, 2, None] * c[:, None]
    wts = area[:, None] * _W[None, :]
    return pts.reshape(-1, 2), wts.ravel(), np.repeat(owner, len(_W))


def cell_integrals(mesh: Mesh, f, quad=None) -> np.ndarray:
    """Integrate ``f(points)`` (scalar or vector valued) over every cell."""
    pts, wts, owner = quad if quad is not None else fan_quadrature(mesh)
    vals = np.asarray(f(pts), dtype=float)
    if vals.ndim == 1:
        return np.bincount(owner, weights=wts * vals, minlength=mesh.num_cells)
    vals = vals.reshape(len(pts), -1)
    return np.column_stack(
        [np.bincount(owner, weights=wts * vals[:, j], minlength=mesh.num_cells) for j in range(vals.shape[1])]
    )
