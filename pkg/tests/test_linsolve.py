import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from mpxa.linsolve import (
    SingularMatrix,
    TripletBuffer,
    assemble,
    dump_coo,
    is_symmetric,
    load_coo,
    solve_bordered,
    solve_direct,
)
from mpxa.mesh import MeshSpec, build_subgrid, generate_mesh
from mpxa.mpfa import discretize_darcy


def test_duplicates_summed():
    A = assemble([(0, 0, 1.0), (0, 0, 2.0)], (1, 1))
    assert A.nnz == 1 and A[0, 0] == 3.0


def test_empty_stream():
    A = assemble([], (3, 2))
    assert A.shape == (3, 2) and A.nnz == 0


def test_out_of_range():
    with pytest.raises(IndexError):
        assemble([(3, 0, 1.0)], (3, 3))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_permuted_stream_identical(seed):
    rng = np.random.default_rng(seed)
    r, c, v = rng.integers(0, 30, 1000), rng.integers(0, 30, 1000), rng.standard_normal(1000)
    p = rng.permutation(1000)
    A = assemble((r, c, v), (30, 30))
    B = assemble((r[p], c[p], v[p]), (30, 30))
    np.testing.assert_array_equal(A.indptr, B.indptr)
    np.testing.assert_array_equal(A.indices, B.indices)
    np.testing.assert_array_equal(A.data, B.data)


def test_triplet_buffer_blocks():
    buf = TripletBuffer((3, 3))
    buf.add_block([0, 1], [0, 1], np.ones((2, 2)))
    buf.add_block([1, 2], [1, 2], np.ones((2, 2)))
    np.testing.assert_array_equal(buf.tocsr().toarray(), [[1, 1, 0], [1, 2, 1], [0, 1, 1]])


def test_identity_solve():
    x, rep = solve_direct(sps.identity(4, format="csr"), np.eye(4)[0])
    np.testing.assert_array_equal(x, np.eye(4)[0])
    assert rep.residual == 0.0


def test_poisson_closed_form():
    n = 10
    h = 1.0 / (n + 1)
    A = sps.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h**2
    x, _ = solve_direct(A, np.ones(n))
    i = np.arange(1, n + 1)
    np.testing.assert_allclose(x, i * (n + 1 - i) * h**2 / 2, rtol=0, atol=1e-12)


def test_darcy_residual():
    m = generate_mesh(MeshSpec("cartesian", 8, 0.0, 0)).all_tagged("dirichlet")
    A = discretize_darcy(m, build_subgrid(m), np.eye(2)).matrix()
    b = np.sin(np.arange(m.num_cells))
    x, rep = solve_direct(A, b)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-9
    assert rep.residual <= 1e-9


def test_singular_reported():
    A = sps.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularMatrix):
        solve_direct(A, np.ones(2))
    with pytest.raises(SingularMatrix, match="column 1"):
        solve_direct(sps.csr_matrix(np.array([[1.0, 0.0], [1.0, 0.0]])), np.ones(2))


def test_deterministic_solution():
    rng = np.random.default_rng(0)
    A = sps.random(200, 200, 0.05, random_state=1) + 10 * sps.identity(200)
    b = rng.standard_normal(200)
    assert np.array_equal(solve_direct(A, b)[0], solve_direct(A, b)[0])


def test_bordered_neumann_poisson():
    # 1D pure-Neumann Laplacian; compatible rhs, zero-mean solution
    n = 20
    A = sps.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tolil()
    A[0, 0] = A[n - 1, n - 1] = 1
    b = np.cos(np.pi * (np.arange(n) + 0.5) / n)
    x, rep, lam = solve_bordered(A.tocsr(), b, np.ones(n))
    assert abs(x.sum()) < 1e-12
    np.testing.assert_allclose(A @ x, b, atol=1e-10)
    assert abs(lam[0]) < 1e-12


def test_coo_round_trip(tmp_path):
    A = sps.random(7, 5, 0.4, random_state=3, format="csr")
    dump_coo(A, tmp_path / "a.coo", "config abc")
    assert (tmp_path / "a.coo").read_text().startswith("# config abc")
    B = load_coo(tmp_path / "a.coo")
    assert B.shape == A.shape
    np.testing.assert_array_equal(B.toarray(), A.toarray())


def test_symmetry_flag():
    assert is_symmetric(sps.csr_matrix(np.array([[2.0, 1.0], [1.0, 3.0]])))
    assert not is_symmetric(sps.csr_matrix(np.array([[2.0, 1.0], [0.0, 3.0]])))
