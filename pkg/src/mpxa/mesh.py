"""Polygonal primal grids in 2D and the interaction-region overlay.

A :class:`Mesh` stores counter-clockwise polygonal cells together with the
derived face, normal and measure arrays. :func:`build_subgrid` refines it into
subfaces (one per face/endpoint pair), subcells (one per cell/vertex pair)
and dual cells gathering everything incident to a vertex.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2
BOUNDARY = -1

_TAG_NAMES = {DIRICHLET: "dirichlet", NEUMANN: "neumann"}
_TAG_CODES = {"dirichlet": DIRICHLET, "neumann": NEUMANN}

SINGLE_POINT = "single"
FULL_QUADRATIC = "full"

# fan triangles below this fraction of the cell area count as degenerate
_STAR_TOL = 1e-12


class MeshError(ValueError):
    """Invalid connectivity or geometry."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _polygon_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _polygon_centroid(pts: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)


def _fan_areas(center: np.ndarray, pts: np.ndarray) -> np.ndarray:
    a = pts - center
    b = np.roll(pts, -1, axis=0) - center
    return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


def _is_star(center: np.ndarray, pts: np.ndarray, area: float) -> bool:
    return bool(np.all(_fan_areas(center, pts) > _STAR_TOL * area))


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable 2D polygonal grid.

    Faces are numbered in order of first appearance when walking the cells in
    index order, so ``face_cells[f, 0]`` is always the lower cell index and the
    stored normal points from it toward ``face_cells[f, 1]`` (``-1`` on the
    boundary, where the normal is outward).
    """

    vertices: np.ndarray
    cell_ptr: np.ndarray
    cell_vertices: np.ndarray
    face_vertices: np.ndarray
    face_cells: np.ndarray
    face_tags: np.ndarray
    cell_centers: np.ndarray
    cell_volumes: np.ndarray
    face_centers: np.ndarray
    face_normals: np.ndarray
    face_areas: np.ndarray
    cell_face_ptr: np.ndarray
    cell_faces: np.ndarray
    cell_face_signs: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def num_cells(self) -> int:
        return len(self.cell_ptr) - 1

    @property
    def num_faces(self) -> int:
        return len(self.face_vertices)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def cells(self) -> list[np.ndarray]:
        return [self.cell_loop(k) for k in range(self.num_cells)]

    def cell_loop(self, k: int) -> np.ndarray:
        return self.cell_vertices[self.cell_ptr[k] : self.cell_ptr[k + 1]]

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] == BOUNDARY)

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] != BOUNDARY)

    @property
    def boundary_tags(self) -> dict[int, str]:
        return {int(f): _TAG_NAMES[int(self.face_tags[f])] for f in self.boundary_faces}

    @property
    def h(self) -> float:
        """Characteristic size: square root of the mean cell area."""
        return float(np.sqrt(self.cell_volumes.mean()))

    def max_diameter(self) -> float:
        d = 0.0
        for k in range(self.num_cells):
            p = self.vertices[self.cell_loop(k)]
            diff = p[:, None, :] - p[None, :, :]
            d = max(d, float(np.sqrt((diff**2).sum(-1)).max()))
        return d

    @classmethod
    def from_cells(
        cls,
        vertices: np.ndarray,
        cells: Sequence[Sequence[int]],
        boundary_tags: dict[tuple[int, int], str] | None = None,
        meta: dict | None = None,
    ) -> "Mesh":
        """Build a mesh from vertex coordinates and counter-clockwise loops.

        ``boundary_tags`` maps an (unordered) vertex pair to ``"dirichlet"`` or
        ``"neumann"``; untagged boundary faces default to Dirichlet.
        """
        vertices = np.array(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be an (n, 2) array")
        if not np.all(np.isfinite(vertices)):
            raise MeshError("non-finite vertex coordinate")
        nv = len(vertices)
        loops = [np.asarray(c, dtype=np.int64) for c in cells]
        if not loops:
            raise MeshError("mesh has no cells")

        cell_ptr = np.zeros(len(loops) + 1, dtype=np.int64)
        for k, loop in enumerate(loops):
            if len(loop) < 3:
                raise MeshError(f"cell {k} has fewer than three vertices")
            if loop.min() < 0 or loop.max() >= nv:
                raise MeshError(f"dangling vertex index in cell {k}")
            if len(np.unique(loop)) != len(loop):
                raise MeshError(f"cell {k} repeats a vertex")
            cell_ptr[k + 1] = cell_ptr[k] + len(loop)
        cell_vertices = np.concatenate(loops)

        edge_index: dict[tuple[int, int], int] = {}
        face_vertices: list[tuple[int, int]] = []
        face_cells: list[list[int]] = []
        cf, cs = [], []
        for k, loop in enumerate(loops):
            for i in range(len(loop)):
                a, b = int(loop[i]), int(loop[(i + 1) % len(loop)])
                key = (a, b) if a < b else (b, a)
                f = edge_index.get(key)
                if f is None:
                    f = len(face_vertices)
                    edge_index[key] = f
                    face_vertices.append((a, b))
                    face_cells.append([k, BOUNDARY])
                    cf.append(f)
                    cs.append(1.0)
                    continue
                if face_cells[f][1] != BOUNDARY or face_cells[f][0] == k:
                    raise MeshError(f"non-manifold face between vertices {key}")
                if face_vertices[f] != (b, a):
                    raise MeshError(
                        f"inconsistent orientation on face {key}: overlapping or clockwise cells"
                    )
                face_cells[f][1] = k
                cf.append(f)
                cs.append(-1.0)

        fv = np.array(face_vertices, dtype=np.int64)
        fc = np.array(face_cells, dtype=np.int64)
        tags = np.where(fc[:, 1] == BOUNDARY, DIRICHLET, INTERIOR).astype(np.int8)
        if boundary_tags:
            for pair, name in boundary_tags.items():
                key = (min(pair), max(pair))
                f = edge_index.get(key)
                if f is None or fc[f, 1] != BOUNDARY:
                    raise MeshError(f"boundary tag on non-boundary face {key}")
                if name not in _TAG_CODES:
                    raise MeshError(f"unknown boundary tag {name!r}")
                tags[f] = _TAG_CODES[name]

        nc = len(loops)
        volumes = np.empty(nc)
        centers = np.empty((nc, 2))
        for k, loop in enumerate(loops):
            pts = vertices[loop]
            area = _polygon_area(pts)
            if area <= 0.0:
                raise MeshError(f"cell {k} is clockwise or degenerate")
            volumes[k] = area
            c = pts.mean(axis=0)
            if not _is_star(c, pts, area):
                c = _polygon_centroid(pts)
                if not _is_star(c, pts, area):
                    raise MeshError(f"cell {k} is not star-shaped with respect to its center")
            centers[k] = c

        pa, pb = vertices[fv[:, 0]], vertices[fv[:, 1]]
        tangent = pb - pa
        lengths = np.sqrt((tangent**2).sum(axis=1))
        if np.any(lengths <= 0.0):
            raise MeshError("zero-length face")
        normals = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / lengths[:, None]

        cell_faces = np.array(cf, dtype=np.int64)
        signs = np.array(cs)
        return cls(
            vertices=_readonly(vertices),
            cell_ptr=_readonly(cell_ptr),
            cell_vertices=_readonly(cell_vertices),
            face_vertices=_readonly(fv),
            face_cells=_readonly(fc),
            face_tags=_readonly(tags),
            cell_centers=_readonly(centers),
            cell_volumes=_readonly(volumes),
            face_centers=_readonly(0.5 * (pa + pb)),
            face_normals=_readonly(normals),
            face_areas=_readonly(lengths),
            cell_face_ptr=_readonly(cell_ptr.copy()),
            cell_faces=_readonly(cell_faces),
            cell_face_signs=_readonly(signs),
            meta=dict(meta or {}),
        )

    def with_tags(self, rule: Callable[[np.ndarray, np.ndarray], str]) -> "Mesh":
        """Copy of the mesh with boundary tags ``rule(face_center, normal)``."""
        tags = {}
        for f in self.boundary_faces:
            a, b = self.face_vertices[f]
            tags[(int(a), int(b))] = rule(self.face_centers[f], self.face_normals[f])
        return Mesh.from_cells(self.vertices.copy(), self.cells, tags, self.meta)

    def all_tagged(self, name: str) -> "Mesh":
        return self.with_tags(lambda c, n: name)

    def divergence(self, d: int = 1):
        """Signed cells-by-faces incidence (``+1`` for the lower cell)."""
        import scipy.sparse as sps

        nc, nf = self.num_cells, self.num_faces
        rows = np.repeat(np.arange(nc), np.diff(self.cell_face_ptr))
        div = sps.csr_matrix((self.cell_face_signs, (rows, self.cell_faces)), shape=(nc, nf))
        if d == 1:
            return div
        return sps.kron(div, sps.identity(d), format="csr")

    # -- invariants -----------------------------------------------------------
    def gauss_defect(self) -> float:
        """Largest per-cell norm of the signed sum of area-weighted normals."""
        w = self.face_areas[self.cell_faces, None] * self.face_normals[self.cell_faces]
        w = w * self.cell_face_signs[:, None]
        sums = np.add.reduceat(w, self.cell_face_ptr[:-1], axis=0)
        return float(np.abs(sums).max())

    def check(self, area: float | None = None) -> None:
        if self.gauss_defect() > 1e-12:
            raise MeshError("discrete Gauss identity violated")
        if area is not None and abs(self.cell_volumes.sum() - area) > 1e-12 * area:
            raise MeshError("cells do not partition the domain")

    # -- serialization --------------------------------------------------------
    def to_json(self) -> dict:
        out = {
            "vertices": self.vertices.tolist(),
            "cells": [loop.tolist() for loop in self.cells],
            "boundary": [
                {"face": [int(a), int(b)], "tag": _TAG_NAMES[int(self.face_tags[f])]}
                for f in self.boundary_faces
                for a, b in [self.face_vertices[f]]
            ],
        }
        if self.meta:
            out["meta"] = self.meta
        return out


def _mesh_from_json(data: dict) -> Mesh:
    try:
        vertices = np.array(data["vertices"], dtype=float)
        cells = data["cells"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MeshError(f"malformed mesh file: {exc}") from exc
    if not isinstance(cells, list) or not all(isinstance(c, list) for c in cells):
        raise MeshError("malformed mesh file: cells must be a list of vertex lists")
    tags = {}
    for entry in data.get("boundary", []):
        try:
            a, b = entry["face"]
            tags[(int(a), int(b))] = entry["tag"]
        except (KeyError, TypeError, ValueError) as exc:
            raise MeshError(f"malformed boundary entry {entry!r}") from exc
    for loop in cells:
        if any(int(v) < 0 or int(v) >= len(vertices) for v in loop):
            raise MeshError("dangling vertex index")
    return Mesh.from_cells(vertices, cells, tags, data.get("meta"))


def load_mesh(path: str | Path) -> Mesh:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MeshError(f"malformed mesh file: {exc}") from exc
    return _mesh_from_json(data)


def save_mesh(mesh: Mesh, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mesh.to_json()) + "\n")


# -- generation ----------------------------------------------------------------


@dataclass(frozen=True)
class MeshSpec:
    kind: str = "cartesian"
    n: int = 8
    perturbation: float = 0.0
    seed: int = 0

    KINDS = ("cartesian", "perturbed_quad", "triangle", "voronoi_polygon")

    def validate(self) -> None:
        if self.kind not in self.KINDS:
            raise MeshError(f"unknown mesh kind {self.kind!r}")
        if self.n < 2:
            raise MeshError("resolution n must be at least 2")
        if not 0.0 <= self.perturbation < 0.5:
            raise MeshError("perturbation must lie in [0, 0.5)")


def _lattice(n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n + 1)
    x, y = np.meshgrid(t, t, indexing="xy")
    return np.column_stack([x.ravel(), y.ravel()])


def _quad_loops(n: int) -> list[list[int]]:
    loops = []
    for j in range(n):
        for i in range(n):
            v = i + j * (n + 1)
            loops.append([v, v + 1, v + n + 2, v + n + 1])
    return loops


def _triangle_loops(n: int) -> list[list[int]]:
    loops = []
    for j in range(n):
        for i in range(n):
            v = i + j * (n + 1)
            loops.append([v, v + 1, v + n + 2])
            loops.append([v, v + n + 2, v + n + 1])
    return loops


def _perturb(
    vertices: np.ndarray,
    loops: list[list[int]],
    amplitude: float,
    rng: np.random.Generator,
    max_tries: int = 100,
) -> np.ndarray:
    """Displace interior lattice vertices, resampling until adjacent cells stay star-shaped."""
    pts = vertices.copy()
    interior = np.flatnonzero(
        (pts[:, 0] > 0.0) & (pts[:, 0] < 1.0) & (pts[:, 1] > 0.0) & (pts[:, 1] < 1.0)
    )
    touching: dict[int, list[int]] = {}
    for k, loop in enumerate(loops):
        for v in loop:
            touching.setdefault(v, []).append(k)
    for v in interior:
        base = pts[v].copy()
        for _ in range(max_tries):
            pts[v] = base + amplitude * rng.uniform(-1.0, 1.0, size=2)
            ok = True
            for k in touching[v]:
                cell = pts[loops[k]]
                area = _polygon_area(cell)
                if area <= 0.0 or not _is_star(cell.mean(axis=0), cell, area):
                    ok = False
                    break
            if ok:
                break
        else:
            raise MeshError(f"perturbation inverts a subcell at vertex {v}")
    return pts


def _voronoi(n: int, jitter: float, rng: np.random.Generator) -> tuple[np.ndarray, list[list[int]]]:
    from scipy.spatial import Voronoi

    h = 1.0 / n
    rows = max(2, int(round(2.0 / (np.sqrt(3.0) * h))))
    seeds = []
    for j in range(rows):
        for i in range(n):
            seeds.append([(i + 0.25 + 0.5 * (j % 2)) * h, (j + 0.5) / rows])
    seeds = np.array(seeds)
    margin = 0.2 * min(h, 1.0 / rows)
    seeds = seeds + jitter * h * rng.uniform(-1.0, 1.0, size=seeds.shape)
    seeds = np.clip(seeds, margin, 1.0 - margin)

    mirrored = [seeds]
    for axis, value in ((0, 0.0), (0, 1.0), (1, 0.0), (1, 1.0)):
        m = seeds.copy()
        m[:, axis] = 2.0 * value - m[:, axis]
        mirrored.append(m)
    vor = Voronoi(np.vstack(mirrored))

    raw = vor.vertices.copy()
    raw[np.abs(raw) < 1e-12] = 0.0
    raw[np.abs(raw - 1.0) < 1e-12] = 1.0
    # qhull emits near-duplicate vertices on cocircular mirror pairs
    tol = 1e-9 * h
    key = np.round(raw / tol).astype(np.int64)
    used = sorted({v for r in vor.point_region[: len(seeds)] for v in vor.regions[r]})
    remap: dict[int, int] = {}
    coords: list[np.ndarray] = []
    seen: dict[tuple[int, int], int] = {}
    for v in used:
        found = None
        kx, ky = key[v]
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                found = seen.get((kx + dx, ky + dy))
                if found is not None and np.abs(coords[found] - raw[v]).max() <= tol:
                    break
                found = None
            if found is not None:
                break
        if found is None:
            found = len(coords)
            coords.append(raw[v])
            seen[(kx, ky)] = found
        remap[v] = found

    loops = []
    pts = np.array(coords)
    for s in range(len(seeds)):
        region = vor.regions[vor.point_region[s]]
        if -1 in region or not region:
            raise MeshError("unbounded Voronoi region inside the unit square")
        loop: list[int] = []
        for v in region:
            w = remap[v]
            if not loop or loop[-1] != w:
                loop.append(w)
        if loop[0] == loop[-1]:
            loop.pop()
        if _polygon_area(pts[loop]) < 0.0:
            loop.reverse()
        loops.append(loop)
    return pts, loops


def generate_mesh(spec: MeshSpec) -> Mesh:
    """Grid of the unit square; identical (spec, seed) gives identical meshes."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    h = 1.0 / spec.n
    meta = {"kind": spec.kind, "n": spec.n, "perturbation": spec.perturbation, "seed": spec.seed}
    if spec.kind == "voronoi_polygon":
        pts, loops = _voronoi(spec.n, spec.perturbation, rng)
    else:
        pts = _lattice(spec.n)
        loops = _triangle_loops(spec.n) if spec.kind == "triangle" else _quad_loops(spec.n)
        amplitude = spec.perturbation * h
        if spec.kind == "perturbed_quad" and amplitude == 0.0:
            logger.info("perturbed_quad with zero perturbation is a Cartesian grid")
        if amplitude > 0.0:
            pts = _perturb(pts, loops, amplitude, rng)
    mesh = Mesh.from_cells(pts, loops, meta=meta)
    mesh.check(area=1.0)
    return mesh


# -- interaction-region overlay -------------------------------------------------

_GAUSS2 = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


@dataclass(frozen=True, eq=False)
class SubGrid:
    """Subfaces, subcells and dual cells of a mesh.

    Subface ``2 f + j`` is the half of face ``f`` touching its ``j``-th endpoint.
    Each subface carries a continuity point ``x_f + eta (x_s - x_f)`` and
    quadrature points/weights for the potential-jump penalty.
    """

    mesh: Mesh
    eta: float
    quadrature: str
    subface_face: np.ndarray
    subface_vertex: np.ndarray
    subface_areas: np.ndarray
    continuity_points: np.ndarray
    quad_ptr: np.ndarray
    quad_points: np.ndarray
    quad_weights: np.ndarray
    subcell_cell: np.ndarray
    subcell_vertex: np.ndarray
    subcell_volumes: np.ndarray
    dual_cell_ptr: np.ndarray
    dual_subcells: np.ndarray
    dual_face_ptr: np.ndarray
    dual_subfaces: np.ndarray
    boundary_subfaces: np.ndarray
    boundary_index: np.ndarray

    @property
    def num_subfaces(self) -> int:
        return len(self.subface_face)

    @property
    def num_subcells(self) -> int:
        return len(self.subcell_cell)

    @property
    def num_boundary_subfaces(self) -> int:
        return len(self.boundary_subfaces)

    def subcells_of(self, s: int) -> np.ndarray:
        return self.dual_subcells[self.dual_cell_ptr[s] : self.dual_cell_ptr[s + 1]]

    def subfaces_of(self, s: int) -> np.ndarray:
        return self.dual_subfaces[self.dual_face_ptr[s] : self.dual_face_ptr[s + 1]]

    def quadrature_of(self, sf: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.quad_ptr[sf], self.quad_ptr[sf + 1]
        return self.quad_points[a:b], self.quad_weights[a:b]


def build_subgrid(mesh: Mesh, eta: float = 0.0, quadrature: str = SINGLE_POINT) -> SubGrid:
    if not 0.0 <= eta < 1.0:
        raise MeshError("eta must lie in [0, 1)")
    if quadrature not in (SINGLE_POINT, FULL_QUADRATIC):
        raise MeshError(f"unknown quadrature rule {quadrature!r}")
    nf = mesh.num_faces
    sf_face = np.repeat(np.arange(nf), 2)
    sf_vertex = mesh.face_vertices.ravel().copy()
    sf_area = 0.5 * mesh.face_areas[sf_face]
    xf = mesh.face_centers[sf_face]
    xs = mesh.vertices[sf_vertex]
    cpoints = xf + eta * (xs - xf)

    if quadrature == SINGLE_POINT:
        qptr = np.arange(2 * nf + 1)
        qpts = cpoints.copy()
        qw = sf_area.copy()
    else:
        qptr = 2 * np.arange(2 * nf + 1)
        qpts = (xf[:, None, :] + _GAUSS2[None, :, None] * (xs - xf)[:, None, :]).reshape(-1, 2)
        qw = np.repeat(0.5 * sf_area, 2)

    sc_cell, sc_vertex, sc_vol = [], [], []
    for k in range(mesh.num_cells):
        loop = mesh.cell_loop(k)
        pts = mesh.vertices[loop]
        xk = mesh.cell_centers[k]
        mids = 0.5 * (pts + np.roll(pts, -1, axis=0))
        for i, v in enumerate(loop):
            quad = np.array([xk, mids[i - 1], pts[i], mids[i]])
            vol = _polygon_area(quad)
            if vol <= 0.0:
                raise MeshError(f"subcell ({k}, {v}) has non-positive area")
            sc_cell.append(k)
            sc_vertex.append(int(v))
            sc_vol.append(vol)
    sc_cell = np.array(sc_cell, dtype=np.int64)
    sc_vertex = np.array(sc_vertex, dtype=np.int64)
    sc_vol = np.array(sc_vol)

    nv = mesh.num_vertices
    order = np.lexsort((sc_cell, sc_vertex))
    dual_cell_ptr = np.concatenate([[0], np.cumsum(np.bincount(sc_vertex, minlength=nv))])
    forder = np.lexsort((np.arange(2 * nf), sf_vertex))
    dual_face_ptr = np.concatenate([[0], np.cumsum(np.bincount(sf_vertex, minlength=nv))])

    bsub = np.flatnonzero(mesh.face_cells[sf_face, 1] == BOUNDARY)
    bindex = np.full(2 * nf, -1, dtype=np.int64)
    bindex[bsub] = np.arange(len(bsub))

    return SubGrid(
        mesh=mesh,
        eta=float(eta),
        quadrature=quadrature,
        subface_face=_readonly(sf_face),
        subface_vertex=_readonly(sf_vertex),
        subface_areas=_readonly(sf_area),
        continuity_points=_readonly(cpoints),
        quad_ptr=_readonly(qptr),
        quad_points=_readonly(qpts),
        quad_weights=_readonly(qw),
        subcell_cell=_readonly(sc_cell),
        subcell_vertex=_readonly(sc_vertex),
        subcell_volumes=_readonly(sc_vol),
        dual_cell_ptr=_readonly(dual_cell_ptr),
        dual_subcells=_readonly(order),
        dual_face_ptr=_readonly(dual_face_ptr),
        dual_subfaces=_readonly(forder),
        boundary_subfaces=_readonly(bsub),
        boundary_index=_readonly(bindex),
    )
