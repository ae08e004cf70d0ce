"""Analytic test cases on the unit square.

Manufactured cases are written symbolically with sympy and turned into
vectorized numpy evaluators; sources are the exact divergence of the exact
fluxes plus the storage and coupling terms. All evaluators take an ``(n, 2)``
array of points.

Conventions shared with the discretization::

    Darcy:    tau_p = -kappa grad p + g,           alpha:grad u + c p + theta div tau_p = r_p
    Momentum: pi = C eps(u) - alpha p [- alpha_phi phi],   div pi = r_u
    Heat:     tau_phi = -kappa_phi grad phi [+ phi tau_p]
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp
from scipy.optimize import minimize_scalar

Evaluator = Callable[[np.ndarray], np.ndarray]

CASES = ("smooth_darcy", "smooth_biot", "thermo_443", "singular_eigestad", "hydrostatic", "robustness_layer")

_x, _y = sp.symbols("x y", real=True)


@dataclass
class AnalyticCase:
    name: str
    physics: str
    params: dict
    p: Evaluator | None = None
    flux: Evaluator | None = None
    r_p: Evaluator | None = None
    u: Evaluator | None = None
    stress: Evaluator | None = None
    r_u: Evaluator | None = None
    phi: Evaluator | None = None
    heat_flux: Evaluator | None = None
    r_phi: Evaluator | None = None
    kappa: Evaluator | None = None
    gravity: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def kappa_cells(self, centers: np.ndarray) -> np.ndarray:
        if self.kappa is None:
            return np.broadcast_to(np.eye(2), (len(centers), 2, 2)).copy()
        return self.kappa(centers)


def _numpy(expr) -> Evaluator:
    """Vectorized evaluator of a scalar sympy expression in (x, y)."""
    fn = sp.lambdify((_x, _y), expr, "numpy")

    def ev(pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.broadcast_to(np.asarray(fn(pts[:, 0], pts[:, 1]), dtype=float), (len(pts),)).copy()

    return ev


def _stack(*exprs) -> Evaluator:
    parts = [_numpy(e) for e in exprs]
    return lambda pts: np.column_stack([f(pts) for f in parts])


def _tensor(M) -> Evaluator:
    f = _stack(M[0, 0], M[0, 1], M[1, 0], M[1, 1])
    return lambda pts: f(pts).reshape(-1, 2, 2)


def _grad(e):
    return sp.Matrix([sp.diff(e, _x), sp.diff(e, _y)])


def _div(v):
    return sp.diff(v[0], _x) + sp.diff(v[1], _y)


def _jac(u):
    return sp.Matrix([[sp.diff(u[i], v) for v in (_x, _y)] for i in range(2)])


def _hooke(u, mu, lam):
    G = _jac(u)
    eps = (G + G.T) / 2
    return 2 * mu * eps + lam * eps.trace() * sp.eye(2)


def _div_tensor(P):
    return sp.Matrix([sp.diff(P[i, 0], _x) + sp.diff(P[i, 1], _y) for i in range(2)])


def _fields():
    s = sp.sin(2 * sp.pi * _x)
    u = sp.Matrix([s * _y * (1 - _y), s * sp.sin(2 * sp.pi * _y)])
    p = s * _y * (1 - _y)
    phi = _x * _y * (1 - _x) * (1 - _y)
    return u, p, phi


def smooth_darcy(kappa=((1.0, 0.0), (0.0, 1.0))) -> AnalyticCase:
    _, p, _ = _fields()
    K = sp.Matrix(kappa)
    tau = -K * _grad(p)
    kap = np.array(kappa, dtype=float)
    return AnalyticCase(
        name="smooth_darcy",
        physics="darcy",
        params={"kappa": kap.tolist()},
        p=_numpy(p),
        flux=_stack(*tau),
        r_p=_numpy(_div(tau)),
        kappa=lambda pts: np.broadcast_to(kap, (len(pts), 2, 2)).copy(),
    )


def smooth_biot(theta: float = 1.0, c: float = 1.0, mu: float = 1.0, lam: float = 1.0) -> AnalyticCase:
    u, p, _ = _fields()
    tau = -_grad(p)
    pi = _hooke(u, mu, lam) - p * sp.eye(2)
    r_p = _div(u) + c * p + theta * _div(tau)
    return AnalyticCase(
        name="smooth_biot",
        physics="biot",
        params={"theta": theta, "c": c, "mu": mu, "lam": lam, "alpha": 1.0, "kappa": 1.0},
        p=_numpy(p),
        flux=_stack(*tau),
        r_p=_numpy(r_p),
        u=_stack(*u),
        stress=_tensor(pi),
        r_u=_stack(*_div_tensor(pi)),
    )


def thermo_443(advection: bool = True, theta: float = 1.0) -> AnalyticCase:
    """Unit parameters; the heat flux carries ``phi tau_p`` when ``advection``."""
    u, p, phi = _fields()
    tau_p = -_grad(p)
    tau_phi = -_grad(phi) + (phi * tau_p if advection else sp.zeros(2, 1))
    pi = _hooke(u, 1, 1) - p * sp.eye(2) - phi * sp.eye(2)
    r_p = _div(u) + p + phi + theta * _div(tau_p)
    r_phi = _div(u) + p + phi + theta * _div(tau_phi)
    return AnalyticCase(
        name="thermo_443",
        physics="thermo",
        params={"theta": theta, "advection": advection, "c": 1.0, "mu": 1.0, "lam": 1.0},
        p=_numpy(p),
        flux=_stack(*tau_p),
        r_p=_numpy(r_p),
        u=_stack(*u),
        stress=_tensor(pi),
        r_u=_stack(*_div_tensor(pi)),
        phi=_numpy(phi),
        heat_flux=_stack(*tau_phi),
        r_phi=_numpy(r_phi),
    )


def hydrostatic() -> AnalyticCase:
    """``p = -y`` balanced by ``g = (0, -1)``: zero flux everywhere."""
    p = -_y
    return AnalyticCase(
        name="hydrostatic",
        physics="darcy",
        params={"kappa": 1.0, "g": [0.0, -1.0]},
        p=_numpy(p),
        flux=lambda pts: np.zeros((len(pts), 2)),
        r_p=lambda pts: np.zeros(len(pts)),
        gravity=np.array([0.0, -1.0]),
    )


def robustness_layer(mu: float = 1.0, lam: float = 1.0) -> AnalyticCase:
    u, _, _ = _fields()
    pi = _hooke(u, mu, lam)
    return AnalyticCase(
        name="robustness_layer",
        physics="elasticity",
        params={"mu": mu, "lam": lam},
        u=_stack(*u),
        stress=_tensor(pi),
        r_u=_stack(*_div_tensor(pi)),
    )


# -- singular interface solution -------------------------------------------------


CENTER = np.array([0.5, 0.5])


def interface_matrix(alpha: float, k1: float, k2: float, sector: float) -> np.ndarray:
    """Continuity of potential and normal flux across both rays for
    ``r^alpha (a_i cos(alpha t) + b_i sin(alpha t))`` with unknowns (a1, b1, a2, b2).

    Material 1 occupies angles (0, sector), material 2 (sector, 2 pi).
    """
    c2, s2 = np.cos(2 * np.pi * alpha), np.sin(2 * np.pi * alpha)
    cw, sw = np.cos(alpha * sector), np.sin(alpha * sector)
    return np.array(
        [
            [1.0, 0.0, -c2, -s2],
            [0.0, k1, k2 * s2, -k2 * c2],
            [cw, sw, -cw, -sw],
            [-k1 * sw, k1 * cw, k2 * sw, -k2 * cw],
        ]
    )


def singular_exponent(k1: float, k2: float, sector: float) -> tuple[float, np.ndarray]:
    """Smallest positive exponent with a nontrivial interface solution.

    Minimizes the smallest singular value of the interface matrix (robust
    even at a double root, as for equal coefficients).
    """

    def smin(a: float) -> float:
        return np.linalg.svd(interface_matrix(a, k1, k2, sector), compute_uv=False)[-1]

    grid = np.linspace(0.02, 1.0, 981)
    vals = np.array([smin(a) for a in grid])
    scale = np.abs(interface_matrix(1.0, k1, k2, sector)).max()
    for i in range(1, len(grid)):
        last = i == len(grid) - 1
        if (last and vals[i] <= vals[i - 1]) or (not last and vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]):
            lo, hi = grid[i - 1], grid[min(i + 1, len(grid) - 1)]
            res = minimize_scalar(smin, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
            if res.fun <= 1e-7 * scale:
                a = float(res.x)
                break
    else:
        raise RuntimeError(f"no interface exponent found for contrast {k1 / k2:g}")
    _, _, Vt = np.linalg.svd(interface_matrix(a, k1, k2, sector))
    coef = Vt[-1]
    coef = coef / np.abs(coef).max()
    return a, coef


def singular_eigestad(contrast: float = 100.0, sector: float = 2 * np.pi / 3) -> AnalyticCase:
    k1, k2 = float(contrast), 1.0
    alpha, coef = singular_exponent(k1, k2, sector)
    a1, b1, a2, b2 = coef

    def polar(pts):
        d = np.asarray(pts, dtype=float) - CENTER
        r = np.hypot(d[:, 0], d[:, 1])
        t = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * np.pi)
        return r, t

    def region_one(t):
        return t < sector

    def p(pts):
        r, t = polar(pts)
        a = np.where(region_one(t), a1, a2)
        b = np.where(region_one(t), b1, b2)
        return r**alpha * (a * np.cos(alpha * t) + b * np.sin(alpha * t))

    def flux(pts):
        r, t = polar(pts)
        one = region_one(t)
        a, b, k = np.where(one, a1, a2), np.where(one, b1, b2), np.where(one, k1, k2)
        rr = np.where(r > 0.0, r, 1.0)
        dr = alpha * rr ** (alpha - 1) * (a * np.cos(alpha * t) + b * np.sin(alpha * t))
        dt = alpha * rr ** (alpha - 1) * (-a * np.sin(alpha * t) + b * np.cos(alpha * t))
        gx = dr * np.cos(t) - dt * np.sin(t)
        gy = dr * np.sin(t) + dt * np.cos(t)
        return -k[:, None] * np.column_stack([gx, gy])

    def kappa(pts):
        _, t = polar(pts)
        k = np.where(region_one(t), k1, k2)
        return k[:, None, None] * np.eye(2)[None]

    return AnalyticCase(
        name="singular_eigestad",
        physics="darcy",
        params={"contrast": contrast, "sector_angle": sector},
        p=p,
        flux=flux,
        r_p=lambda pts: np.zeros(len(pts)),
        kappa=kappa,
        extra={"alpha": alpha, "coefficients": coef},
    )


def expression_case(physics: str, field, kappa=1.0, mu: float = 1.0, lam: float = 1.0) -> AnalyticCase:
    """Case from user expressions in ``x`` and ``y`` with uniform coefficients.

    ``field`` is a pressure expression (darcy) or a pair of displacement
    expressions (elasticity); the source is derived so the field is exact.
    """
    names = {"x": _x, "y": _y}
    try:
        if physics == "darcy":
            p = sp.sympify(field, locals=names)
            kap = np.asarray(kappa, dtype=float)
            kap = kap * np.eye(2) if kap.ndim == 0 else kap.reshape(2, 2)
            tau = -sp.Matrix(kap.tolist()) * _grad(p)
            return AnalyticCase(
                name="expression",
                physics="darcy",
                params={"kappa": kap.tolist(), "p": str(p)},
                p=_numpy(p),
                flux=_stack(*tau),
                r_p=_numpy(_div(tau)),
                kappa=lambda pts: np.broadcast_to(kap, (len(pts), 2, 2)).copy(),
            )
        if physics == "elasticity":
            u = sp.Matrix([sp.sympify(e, locals=names) for e in field])
            pi = _hooke(u, mu, lam)
            return AnalyticCase(
                name="expression",
                physics="elasticity",
                params={"mu": mu, "lam": lam, "u": [str(e) for e in u]},
                u=_stack(*u),
                stress=_tensor(pi),
                r_u=_stack(*_div_tensor(pi)),
            )
    except (sp.SympifyError, TypeError) as exc:
        raise ValueError(f"bad field expression {field!r}: {exc}") from exc
    raise ValueError(f"expressions are supported for darcy and elasticity, not {physics!r}")


def make_case(name: str, **params) -> AnalyticCase:
    builders = {
        "smooth_darcy": smooth_darcy,
        "smooth_biot": smooth_biot,
        "thermo_443": thermo_443,
        "singular_eigestad": singular_eigestad,
        "hydrostatic": hydrostatic,
        "robustness_layer": robustness_layer,
    }
    if name not in builders:
        raise ValueError(f"unknown case {name!r}; choose from {', '.join(CASES)}")
    return builders[name](**params)
