import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpxa.mesh import (
    BOUNDARY,
    FULL_QUADRATIC,
    Mesh,
    MeshError,
    MeshSpec,
    build_subgrid,
    generate_mesh,
    load_mesh,
    save_mesh,
)


def test_cartesian_counts():
    m = generate_mesh(MeshSpec("cartesian", 2, 0.0, 0))
    assert (m.num_cells, m.num_faces, m.num_vertices) == (4, 12, 9)
    np.testing.assert_allclose(m.cell_volumes, 0.25)


def test_triangle_counts():
    m = generate_mesh(MeshSpec("triangle", 2, 0.0, 0))
    assert m.num_cells == 8
    np.testing.assert_allclose(m.cell_volumes, 0.125)


def test_perturbed_invariants():
    m = generate_mesh(MeshSpec("perturbed_quad", 64, 0.3, 1))
    assert abs(m.cell_volumes.sum() - 1.0) < 1e-12
    assert m.gauss_defect() < 1e-12


def test_families_are_valid(family_mesh):
    m = family_mesh
    assert abs(m.cell_volumes.sum() - 1.0) < 1e-12
    assert m.gauss_defect() < 1e-12
    lo, hi = m.face_cells[:, 0], m.face_cells[:, 1]
    interior = hi != BOUNDARY
    assert np.all(lo[interior] < hi[interior])
    # normals point from lo toward hi
    d = m.cell_centers[hi[interior]] - m.cell_centers[lo[interior]]
    assert np.all((d * m.face_normals[interior]).sum(axis=1) > 0)


def test_determinism(tmp_path):
    spec = MeshSpec("perturbed_quad", 8, 0.3, 7)
    save_mesh(generate_mesh(spec), tmp_path / "a.json")
    save_mesh(generate_mesh(spec), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_perturbation_moves_interior_only():
    a = generate_mesh(MeshSpec("cartesian", 6, 0.0, 0))
    b = generate_mesh(MeshSpec("perturbed_quad", 6, 0.3, 3))
    on_boundary = np.any((a.vertices == 0.0) | (a.vertices == 1.0), axis=1)
    np.testing.assert_array_equal(a.vertices[on_boundary], b.vertices[on_boundary])
    assert np.abs(a.vertices[~on_boundary] - b.vertices[~on_boundary]).max() > 0


def test_round_trip(tmp_path):
    m = generate_mesh(MeshSpec("cartesian", 2, 0.0, 0)).with_tags(lambda c, n: "neumann" if c[0] == 0.0 else "dirichlet")
    save_mesh(m, tmp_path / "m.json")
    r = load_mesh(tmp_path / "m.json")
    np.testing.assert_array_equal(r.vertices, m.vertices)
    np.testing.assert_array_equal(r.cell_vertices, m.cell_vertices)
    np.testing.assert_array_equal(r.face_tags, m.face_tags)


def test_dangling_vertex(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"vertices": [[0, 0], [1, 0], [0, 1]], "cells": [[0, 1, 5]]}))
    with pytest.raises(MeshError, match="dangling vertex index"):
        load_mesh(path)


def test_non_manifold_face():
    verts = [[0, 0], [1, 0], [0.5, 1], [0.5, -1], [2, 0.5]]
    with pytest.raises(MeshError, match="non-manifold face"):
        Mesh.from_cells(verts, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])


def test_clockwise_rejected():
    with pytest.raises(MeshError):
        Mesh.from_cells([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])


def test_bad_spec():
    with pytest.raises(ValueError):
        generate_mesh(MeshSpec("cartesian", 1, 0.0, 0))
    with pytest.raises(ValueError):
        generate_mesh(MeshSpec("perturbed_quad", 4, 0.6, 0))


def test_subgrid_partition(family_mesh):
    m = family_mesh
    sg = build_subgrid(m)
    assert sg.num_subfaces == 2 * m.num_faces
    face_sum = np.bincount(sg.subface_face, sg.subface_areas, m.num_faces)
    np.testing.assert_allclose(face_sum, m.face_areas, rtol=1e-12)
    cell_sum = np.bincount(sg.subcell_cell, sg.subcell_volumes, m.num_cells)
    np.testing.assert_allclose(cell_sum, m.cell_volumes, rtol=1e-12)
    assert np.all(sg.subcell_volumes > 0)
    # each subface holds exactly one endpoint of its face
    for sf in range(sg.num_subfaces):
        assert sg.subface_vertex[sf] in m.face_vertices[sg.subface_face[sf]]
    # dual cells partition the domain
    dual = np.array([sg.subcell_volumes[sg.subcells_of(s)].sum() for s in range(m.num_vertices)])
    assert abs(dual.sum() - 1.0) < 1e-12


def test_eta_zero_is_face_center(family_mesh):
    sg = build_subgrid(family_mesh, 0.0)
    np.testing.assert_array_equal(sg.continuity_points, family_mesh.face_centers[sg.subface_face])


def test_continuity_point_interpolates():
    m = Mesh.from_cells([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    sg = build_subgrid(m, 1 / 3)
    f = next(f for f in range(m.num_faces) if set(m.face_vertices[f]) == {0, 1})
    sf = next(s for s in range(sg.num_subfaces) if sg.subface_face[s] == f and sg.subface_vertex[s] == 0)
    # x_f + eta (x_s - x_f) with x_f = (1/2, 0), x_s = (0, 0)
    np.testing.assert_allclose(sg.continuity_points[sf], [1 / 3, 0.0], atol=1e-15)


def test_interior_dual_cell_counts():
    m = generate_mesh(MeshSpec("cartesian", 2, 0.0, 0))
    s = int(np.flatnonzero(np.all(np.isclose(m.vertices, 0.5), axis=1))[0])
    sg = build_subgrid(m)
    assert len(sg.subcells_of(s)) == 4
    assert len(sg.subfaces_of(s)) == 4


def test_full_quadrature_is_exact_for_quadratics():
    m = generate_mesh(MeshSpec("perturbed_quad", 4, 0.3, 0))
    sg = build_subgrid(m, 0.0, FULL_QUADRATIC)
    for sf in range(sg.num_subfaces):
        pts, w = sg.quadrature_of(sf)
        assert len(pts) == 2
        a = m.face_centers[sg.subface_face[sf]]
        b = m.vertices[sg.subface_vertex[sf]]
        # integral of t^2 along the segment parameter t in [0, 1]
        t = np.linalg.norm(pts - a, axis=1) / np.linalg.norm(b - a)
        np.testing.assert_allclose((w * t**2).sum(), sg.subface_areas[sf] / 3, rtol=1e-12)


@settings(max_examples=15, deadline=None)
@given(
    kind=st.sampled_from(["perturbed_quad", "triangle", "voronoi_polygon"]),
    n=st.integers(2, 7),
    pert=st.floats(0.0, 0.45),
    seed=st.integers(0, 10_000),
)
def test_random_meshes_hold_invariants(kind, n, pert, seed):
    m = generate_mesh(MeshSpec(kind, n, pert, seed))
    assert abs(m.cell_volumes.sum() - 1.0) < 1e-12
    assert m.gauss_defect() < 1e-12
    sg = build_subgrid(m)
    assert np.all(sg.subcell_volumes > 0)
