import numpy as np
import pytest

from mpxa.mesh import MeshSpec, build_subgrid, generate_mesh

_ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> None:
        _ACCEPTANCE.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")

    return record


FAMILIES = [
    MeshSpec("cartesian", 8, 0.0, 0),
    MeshSpec("perturbed_quad", 8, 0.3, 1),
    MeshSpec("triangle", 8, 0.0, 0),
    MeshSpec("voronoi_polygon", 8, 0.3, 2),
]


@pytest.fixture(params=FAMILIES, ids=lambda s: s.kind)
def family_mesh(request):
    return generate_mesh(request.param)


@pytest.fixture
def cart4():
    return generate_mesh(MeshSpec("cartesian", 4, 0.0, 0))


def affine(a0: float, a: np.ndarray):
    return lambda pts: a0 + np.asarray(pts) @ a


def subgrid(mesh, eta=0.0, quadrature="single"):
    return build_subgrid(mesh, eta, quadrature)
