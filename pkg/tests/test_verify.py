import math

import numpy as np
import pytest

from mpxa.linsolve import assemble
from mpxa.mesh import MeshSpec, generate_mesh
from mpxa.verify.cases import CASES, expression_case, make_case, singular_exponent
from mpxa.verify.convergence import StudyOptions, convergence_study, fit_rate, solve_case
from mpxa.verify.grids import family_mesh, refine_mesh, robustness_layer_mesh, singular_fan_mesh
from mpxa.verify.integrate import cell_integrals
from mpxa.verify.metrics import COLUMNS, error_metrics, normal_density
from mpxa.verify.monotone import INVERSE, M_MATRIX, NON_MONOTONE, monotonicity_check

STEP = 1e-6


def sample(n=100, seed=0, margin=0.05):
    return np.random.default_rng(seed).uniform(margin, 1 - margin, (n, 2))


def fd_grad(f, pts):
    """Central differences; returns (..., 2) with the derivative index last."""
    ex, ey = np.array([STEP, 0.0]), np.array([0.0, STEP])
    dx = (f(pts + ex) - f(pts - ex)) / (2 * STEP)
    dy = (f(pts + ey) - f(pts - ey)) / (2 * STEP)
    return np.stack([dx, dy], axis=-1)


def fd_div_vector(f, pts):
    g = fd_grad(f, pts)
    return g[:, 0, 0] + g[:, 1, 1]


def fd_div_tensor(f, pts):
    g = fd_grad(f, pts)
    return g[:, :, 0, 0] + g[:, :, 1, 1]


def hooke(case, pts, mu=1.0, lam=1.0):
    G = fd_grad(case.u, pts)
    E = 0.5 * (G + G.transpose(0, 2, 1))
    tr = E[:, 0, 0] + E[:, 1, 1]
    return 2 * mu * E + lam * tr[:, None, None] * np.eye(2)


def close(a, b, tol=1e-5):
    scale = max(np.abs(b).max(), 1.0)
    assert np.abs(a - b).max() <= tol * scale


def test_darcy_sources():
    K = np.array([[2.0, 0.5], [0.5, 1.0]])
    case = make_case("smooth_darcy", kappa=K.tolist())
    x = sample()
    close(case.flux(x), -fd_grad(case.p, x) @ K.T)
    close(case.r_p(x), fd_div_vector(case.flux, x))


@pytest.mark.parametrize("theta,c", [(1.0, 1.0), (1e-6, 1e-6), (0.3, 2.0)])
def test_biot_sources(theta, c):
    case = make_case("smooth_biot", theta=theta, c=c)
    x = sample(seed=1)
    close(case.flux(x), -fd_grad(case.p, x))
    close(case.stress(x), hooke(case, x) - case.p(x)[:, None, None] * np.eye(2))
    close(case.r_u(x), fd_div_tensor(case.stress, x))
    close(case.r_p(x), fd_div_vector(case.u, x) + c * case.p(x) + theta * fd_div_vector(case.flux, x))


@pytest.mark.parametrize("advection", [True, False])
def test_thermo_sources(advection):
    case = make_case("thermo_443", advection=advection)
    x = sample(seed=2)
    tau_p = -fd_grad(case.p, x)
    tau_phi = -fd_grad(case.phi, x) + (case.phi(x)[:, None] * tau_p if advection else 0.0)
    close(case.heat_flux(x), tau_phi)
    close(case.stress(x), hooke(case, x) - (case.p(x) + case.phi(x))[:, None, None] * np.eye(2))
    coupling = fd_div_vector(case.u, x) + case.p(x) + case.phi(x)
    close(case.r_phi(x), coupling + fd_div_vector(case.heat_flux, x))
    close(case.r_p(x), coupling + fd_div_vector(case.flux, x))
    close(case.r_u(x), fd_div_tensor(case.stress, x))


def test_thermo_reference_value():
    case = make_case("thermo_443")
    assert case.p(np.array([[0.25, 0.5]]))[0] == pytest.approx(0.25, abs=1e-14)


def test_layer_and_hydrostatic_sources():
    case = make_case("robustness_layer", mu=2.0, lam=3.0)
    x = sample(seed=3)
    close(case.stress(x), hooke(case, x, 2.0, 3.0))
    close(case.r_u(x), fd_div_tensor(case.stress, x))
    hyd = make_case("hydrostatic")
    close(-fd_grad(hyd.p, x) + hyd.gravity, np.zeros((len(x), 2)))


def test_singular_case():
    case = make_case("singular_eigestad")
    alpha = case.extra["alpha"]
    assert alpha == pytest.approx(0.754727, abs=0.02)
    assert make_case("singular_eigestad", contrast=1.0).extra["alpha"] == pytest.approx(1.0, abs=1e-6)
    # harmonic inside each material, away from the rays and the center
    r = np.random.default_rng(4).uniform(0.1, 0.4, 100)
    t = np.random.default_rng(5).uniform(0, 2 * np.pi, 100)
    keep = (np.abs(t - 2 * np.pi / 3) > 0.05) & (t > 0.05) & (t < 2 * np.pi - 0.05)
    x = 0.5 + np.column_stack([r * np.cos(t), r * np.sin(t)])[keep]
    kap = case.kappa(x)
    close(case.flux(x), -np.einsum("nij,nj->ni", kap, fd_grad(case.p, x)))
    close(fd_div_vector(case.flux, x), np.zeros(len(x)), tol=1e-4)
    # potential and normal flux continuous across both rays
    for ang in (0.0, 2 * np.pi / 3):
        e = np.array([math.cos(ang), math.sin(ang)])
        nrm = np.array([-e[1], e[0]])
        pts = 0.5 + np.outer(r, e)
        a, b = pts + 1e-9 * nrm, pts - 1e-9 * nrm
        close(case.p(a), case.p(b), tol=1e-6)
        close(case.flux(a) @ nrm, case.flux(b) @ nrm, tol=1e-6)
    assert singular_exponent(100.0, 1.0, 2 * np.pi / 3)[0] == pytest.approx(alpha)


def test_expression_case():
    case = expression_case("darcy", "x**2 - y", kappa=2.0)
    x = sample(seed=6)
    close(case.r_p(x), np.full(len(x), -4.0))
    el = expression_case("elasticity", ["x*y", "0"])
    close(el.r_u(x), fd_div_tensor(el.stress, x))
    with pytest.raises(ValueError):
        expression_case("darcy", "x +* y")
    with pytest.raises(ValueError):
        expression_case("biot", "x")
    with pytest.raises(ValueError):
        make_case("nope")
    assert set(CASES) >= {"smooth_darcy", "thermo_443"}


def test_cell_integrals_exact_for_quintics():
    m = generate_mesh(MeshSpec("voronoi_polygon", 6, 0.3, 1))
    vals = cell_integrals(m, lambda p: p[:, 0] ** 3 * p[:, 1] ** 2)
    assert vals.sum() == pytest.approx(1 / 12, abs=1e-13)
    np.testing.assert_allclose(cell_integrals(m, lambda p: np.ones(len(p))), m.cell_volumes, rtol=1e-13)


def test_metrics_against_independent_formula():
    m = generate_mesh(MeshSpec("perturbed_quad", 6, 0.3, 2))
    case = make_case("smooth_biot")
    rng = np.random.default_rng(0)
    xc, xf = m.cell_centers, m.face_centers
    p = case.p(xc) + 1e-3 * rng.standard_normal(m.num_cells)
    u = case.u(xc) + 1e-3 * rng.standard_normal((m.num_cells, 2))
    qd = (case.flux(xf) * m.face_normals).sum(1)
    q = qd * m.face_areas + 1e-3 * rng.standard_normal(m.num_faces)
    rep = error_metrics(case, m, {"u": u.ravel(), "p": p}, {"q": q})
    V, A = m.cell_volumes, m.face_areas
    ep = math.sqrt(sum(V[k] * (p[k] - case.p(xc)[k]) ** 2 for k in range(m.num_cells)))
    ep /= math.sqrt(sum(V[k] * case.p(xc)[k] ** 2 for k in range(m.num_cells)))
    eq = math.sqrt(sum(A[f] ** 2 * (q[f] / A[f] - qd[f]) ** 2 for f in range(m.num_faces)))
    eq /= math.sqrt(sum(A[f] ** 2 * qd[f] ** 2 for f in range(m.num_faces)))
    assert rep.eps_p == pytest.approx(ep, rel=1e-14)
    assert rep.eps_q == pytest.approx(eq, rel=1e-12)
    assert rep.eps_up == pytest.approx(rep.eps_u + rep.eps_p, rel=1e-14)
    assert math.isnan(rep.eps_pi)


def test_exact_projection_has_zero_error():
    m = generate_mesh(MeshSpec("triangle", 4, 0.0, 0))
    case = make_case("smooth_biot")
    xc, xf = m.cell_centers, m.face_centers
    w = normal_density(m, case.stress(xf)) * m.face_areas[:, None]
    rep = error_metrics(case, m, {"u": case.u(xc).ravel(), "p": case.p(xc) + 3.0}, {"w": w})
    assert rep.eps_u == 0.0 and rep.eps_pi < 1e-15
    assert rep.eps_p > 0.0 and rep.eps_p_semi == pytest.approx(0.0, abs=1e-14)


def test_fit_rate():
    h = 2.0 ** -np.arange(3, 8)
    assert fit_rate(h, 5 * h**2) == pytest.approx(2.0, abs=1e-12)
    noisy = 5 * h**1.5 * (1 + 0.01 * np.array([1, -1, 1, -1, 1]))
    assert fit_rate(h, noisy) == pytest.approx(1.5, abs=0.03)
    assert math.isnan(fit_rate(h, np.zeros(5)))


def test_convergence_csv(tmp_path):
    tab = convergence_study(make_case("smooth_darcy"), "cartesian", [2, 3, 4])
    text = tab.to_csv(tmp_path / "r.csv")
    lines = text.splitlines()
    assert lines[0].startswith("# config ") and len(lines[0].split()[2]) == 64
    assert lines[1].split(",")[:3] == ["level", "h", "dofs"]
    assert tuple(lines[1].split(",")[3:]) == COLUMNS
    assert lines[-1].startswith("rate,,,")
    assert float(lines[-1].split(",")[4]) == pytest.approx(2.0, abs=0.3)
    assert convergence_study(make_case("smooth_darcy"), "cartesian", [2, 3, 4]).to_csv() == text
    with pytest.raises(ValueError):
        convergence_study(make_case("smooth_darcy"), "cartesian", [2, 3])


def test_monotonicity_on_poisson():
    n = 10
    A = assemble(
        [(i, i, 2.0) for i in range(n)] + [(i, i + 1, -1.0) for i in range(n - 1)] + [(i + 1, i, -1.0) for i in range(n - 1)],
        (n, n),
    )
    r = monotonicity_check(A, "inverse_positivity")
    assert r.is_m_matrix and r.classification == M_MATRIX and r.min_inverse_entry > 0
    B = A.tolil()
    B[0, 2] = 0.01
    r = monotonicity_check(B, "inverse_positivity")
    assert not r.is_m_matrix and r.classification == INVERSE
    C = A.tolil()
    C[0, 2] = 1.5
    C[0, 0] = 0.5
    r = monotonicity_check(C, "inverse_positivity")
    assert r.classification == NON_MONOTONE
    assert "M-matrix: no" in r.summary()
    with pytest.raises(ValueError):
        monotonicity_check(A, "bogus")


def test_grid_families():
    for kind in ("cartesian", "perturbed_quad", "triangle", "voronoi_polygon"):
        m = family_mesh(kind, 3)
        m.check(1.0)
        assert abs(m.h - 2.0**-3) < 2.0**-3 * 2.5
    fan = singular_fan_mesh(3)
    fan.check(1.0)
    lay = robustness_layer_mesh(8, 5)
    lay.check(1.0)
    assert lay.num_cells > robustness_layer_mesh(8, 1).num_cells


def test_refine_mesh():
    for kind in ("triangle", "perturbed_quad"):
        m = family_mesh(kind, 2)
        r = refine_mesh(m)
        r.check(1.0)
        assert r.num_cells == 4 * m.num_cells
        assert r.meta["refined"] == m.meta.get("refined", 0) + 1
    nested = family_mesh("nested_perturbed_quad", 4)
    assert nested.num_cells == 4**4


def test_solve_case_exact_for_linear_expression():
    m = generate_mesh(MeshSpec("voronoi_polygon", 6, 0.3, 3))
    sol = solve_case(expression_case("darcy", "1 + 2*x - y"), m)
    assert sol.report.eps_p < 1e-10 and sol.report.eps_q < 1e-10
    with pytest.raises(ValueError):
        solve_case(make_case("thermo_443"), m, StudyOptions(mode="strong"))
