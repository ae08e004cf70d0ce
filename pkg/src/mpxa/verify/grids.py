"""Grid families used by the verification studies."""
from __future__ import annotations

import numpy as np

from mpxa.mesh import Mesh, MeshSpec, generate_mesh

# default vertex perturbation per family when a study does not give one
DEFAULT_PERTURBATION = {"cartesian": 0.0, "perturbed_quad": 0.2, "triangle": 0.0, "voronoi_polygon": 0.3}
ALIASES = {"voronoi": "voronoi_polygon", "quad": "perturbed_quad"}


def family_mesh(kind: str, level: int, perturbation: float | None = None, seed: int = 0) -> Mesh:
    """Level ``l`` of a family: ``n = 2**l`` cells per side (nominal h = 2**-l).

    ``nested_<kind>`` perturbs level 2 once and refines it uniformly, so the
    cells tend to parallelograms instead of staying rough on every level.
    """
    kind = ALIASES.get(kind, kind)
    if kind == "singular_fan":
        return singular_fan_mesh(level)
    if kind == "skew_parallelogram":
        return skew_parallelogram_mesh(2**level)
    if kind.startswith("nested_"):
        base = ALIASES.get(kind[len("nested_") :], kind[len("nested_") :])
        pert = 0.2 if perturbation is None else perturbation
        return nested_family_mesh(base, level, min(level, 2), pert, seed)
    pert = DEFAULT_PERTURBATION.get(kind, 0.0) if perturbation is None else perturbation
    return generate_mesh(MeshSpec(kind, 2**level, pert, seed + level))


def _refine_triangle(a, b, c, n: int, index: dict, verts: list) -> list[list[int]]:
    """Split triangle (a, b, c) into n*n congruent triangles; vertices shared via ``index``."""

    def vid(i: int, j: int) -> int:
        # barycentric lattice point a + i/n (b - a) + j/n (c - a)
        p = a + (i / n) * (b - a) + (j / n) * (c - a)
        key = (round(p[0] * 2**40), round(p[1] * 2**40))
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    cells = []
    for i in range(n):
        for j in range(n - i):
            cells.append([vid(i, j), vid(i + 1, j), vid(i, j + 1)])
            if i + j < n - 1:
                cells.append([vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    return cells


def singular_fan_mesh(level: int, sector: float = 2 * np.pi / 3) -> Mesh:
    """Triangles resolving the two material rays from (0.5, 0.5).

    Six coarse triangles fan out from the center to the corners and to the
    points where the rays at angles 0 and ``sector`` meet the boundary; each
    is refined uniformly into ``n**2`` triangles with ``n = 2**(level-1)``.
    """
    center = np.array([0.5, 0.5])
    ray = np.array([np.cos(sector), np.sin(sector)])
    t = min(t for t in ((1 - 0.5) / ray[1] if ray[1] > 0 else np.inf, 0.5 / -ray[0] if ray[0] < 0 else np.inf))
    rim = [
        np.array([1.0, 0.5]),
        np.array([1.0, 1.0]),
        center + t * ray,
        np.array([0.0, 1.0]),
        np.array([0.0, 0.0]),
        np.array([1.0, 0.0]),
    ]
    rim.sort(key=lambda q: np.mod(np.arctan2(q[1] - 0.5, q[0] - 0.5), 2 * np.pi))
    n = 2 ** (level - 1)
    index: dict = {}
    verts: list = []
    cells = []
    for i in range(len(rim)):
        cells += _refine_triangle(center, rim[i], rim[(i + 1) % len(rim)], n, index, verts)
    return Mesh.from_cells(np.array(verts), cells, meta={"family": "singular_fan", "level": level})


def skew_parallelogram_mesh(n: int, shear: float = 0.5) -> Mesh:
    """Uniform n x n grid of the parallelogram {(x + shear*y, y)}; area 1."""
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    x = i.ravel() / n
    y = j.ravel() / n
    verts = np.column_stack([x + shear * y, y])
    cells = []
    for b in range(n):
        for a in range(n):
            v0 = b * (n + 1) + a
            cells.append([v0, v0 + 1, v0 + n + 2, v0 + n + 1])
    return Mesh.from_cells(verts, cells, meta={"family": "skew_parallelogram", "n": n, "shear": shear})


def skewed_aspect_mesh(n: int, aspect: float, shear: float) -> Mesh:
    """n x n parallelogram cells stretched by ``aspect`` in x then sheared."""
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    x = aspect * i.ravel() / n
    y = j.ravel() / n
    verts = np.column_stack([x + shear * y, y])
    cells = []
    for b in range(n):
        for a in range(n):
            v0 = b * (n + 1) + a
            cells.append([v0, v0 + 1, v0 + n + 2, v0 + n + 1])
    return Mesh.from_cells(verts, cells, meta={"family": "skewed_aspect", "aspect": aspect, "shear": shear})


def robustness_layer_mesh(n: int, ratio: int) -> Mesh:
    """Unit square with a horizontal strip of fine squares.

    Coarse cells of size ``1/n`` fill the square except the middle row, which
    is replaced by ``ratio x ratio`` squares per coarse cell. Coarse cells
    touching the strip share its vertices, so they become polygons with
    ``ratio - 1`` extra collinear vertices on that side.
    """
    if n % 2:
        raise ValueError("n must be even so the strip sits in the middle")
    h = 1.0 / n
    f = h / ratio
    row = n // 2
    index: dict = {}
    verts: list = []

    def vid(x: float, y: float) -> int:
        key = (round(x * 2**40), round(y * 2**40))
        if key not in index:
            index[key] = len(verts)
            verts.append((x, y))
        return index[key]

    fine_x = [k * f for k in range(n * ratio + 1)]
    cells = []
    for b in range(n):
        for a in range(n):
            x0, x1 = a * h, (a + 1) * h
            ya, yb = b * h, (b + 1) * h
            if b == row:
                for jj in range(ratio):
                    for ii in range(ratio):
                        xa, ya2 = x0 + ii * f, ya + jj * f
                        cells.append([vid(xa, ya2), vid(xa + f, ya2), vid(xa + f, ya2 + f), vid(xa, ya2 + f)])
                continue
            bottom = [(x, ya) for x in fine_x[a * ratio : (a + 1) * ratio + 1]] if b == row + 1 else [(x0, ya), (x1, ya)]
            top = [(x, yb) for x in fine_x[a * ratio : (a + 1) * ratio + 1]][::-1] if b == row - 1 else [(x1, yb), (x0, yb)]
            loop = [vid(*p) for p in bottom] + [vid(*p) for p in top]
            cells.append(loop)
    return Mesh.from_cells(np.array(verts), cells, meta={"family": "robustness_layer", "n": n, "ratio": ratio})


def refine_mesh(mesh: Mesh) -> Mesh:
    """Uniform 1:4 split of a triangle or quadrilateral grid.

    Triangles split at edge midpoints; quadrilaterals at edge midpoints and
    the vertex mean. Repeated refinement of an irregular coarse grid gives
    cells that tend to parallelograms (quads) or stay in a few similarity
    classes (triangles).
    """
    index: dict = {}
    verts: list = []

    def vid(p) -> int:
        key = (round(p[0] * 2**40), round(p[1] * 2**40))
        if key not in index:
            index[key] = len(verts)
            verts.append(np.asarray(p, dtype=float))
        return index[key]

    cells = []
    for loop in mesh.cells:
        pts = mesh.vertices[loop]
        m = len(pts)
        corner = [vid(p) for p in pts]
        mid = [vid(0.5 * (pts[i] + pts[(i + 1) % m])) for i in range(m)]
        if m == 3:
            cells += [[corner[0], mid[0], mid[2]], [mid[0], corner[1], mid[1]], [mid[2], mid[1], corner[2]], mid]
        elif m == 4:
            c = vid(pts.mean(axis=0))
            cells += [[corner[i], mid[i], c, mid[i - 1]] for i in range(4)]
        else:
            raise ValueError("refinement supports triangles and quadrilaterals only")
    meta = dict(mesh.meta, refined=int(mesh.meta.get("refined", 0)) + 1)
    return Mesh.from_cells(np.array(verts), cells, meta=meta)


def nested_family_mesh(kind: str, level: int, base_level: int = 2, perturbation: float | None = None, seed: int = 0) -> Mesh:
    """Level ``level`` obtained by refining one perturbed grid at ``base_level``."""
    if level < base_level:
        raise ValueError("level below the base level")
    mesh = family_mesh(kind, base_level, perturbation, seed)
    for _ in range(level - base_level):
        mesh = refine_mesh(mesh)
    return mesh
