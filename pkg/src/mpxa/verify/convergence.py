"""Solve analytic cases on grid families and fit convergence rates."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from mpxa.boundary import boundary_data
from mpxa.coupled import BiotParams, ThermoParams, discretize_biot, discretize_thermo, picard_solve
from mpxa.mesh import BOUNDARY, FULL_QUADRATIC, SINGLE_POINT, Mesh, build_subgrid
from mpxa.mpfa import compute_fluxes, discretize_darcy, solve_darcy
from mpxa.mpsa import STRONG, compute_tractions, discretize_elasticity, solve_elasticity
from mpxa.verify.cases import AnalyticCase
from mpxa.verify.grids import family_mesh
from mpxa.verify.integrate import cell_integrals, fan_quadrature
from mpxa.verify.metrics import COLUMNS, EXTRA_COLUMNS, ErrorReport, error_metrics
from mpxa.verify.tpfa import tpfa_reference

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StudyOptions:
    eta: float = 0.0
    quadrature: str | None = None
    mode: str = "weak"
    perturbation: float | None = None
    seed: int = 0
    scheme: str = "mpfa"
    picard_tol: float = 1e-10

    def flow_quadrature(self) -> str:
        return self.quadrature or SINGLE_POINT

    def mech_quadrature(self) -> str:
        """An explicit rule is honored; otherwise strong symmetry gets the full rule."""
        if self.quadrature is not None:
            return self.quadrature
        return FULL_QUADRATIC if self.mode == STRONG else SINGLE_POINT


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()


def _normal_flux(evaluator, d: int):
    def flux(pts, normals):
        v = evaluator(pts)
        if d == 1:
            return (v * normals).sum(axis=1)
        return np.einsum("nij,nj->ni", v, normals)

    return flux


@dataclass
class Solution:
    mesh: Mesh
    fields: dict
    fluxes: dict
    report: ErrorReport
    info: dict = field(default_factory=dict)


def solve_case(case: AnalyticCase, mesh: Mesh, opts: StudyOptions = StudyOptions()) -> Solution:
    """Discretize and solve ``case`` on ``mesh`` with all-Dirichlet boundaries."""
    if not np.any(mesh.face_tags[mesh.boundary_faces]):
        mesh = mesh.all_tagged("dirichlet")
    sg = build_subgrid(mesh, opts.eta, opts.flow_quadrature())
    quad = fan_quadrature(mesh)
    nc = mesh.num_cells
    theta = float(case.params.get("theta", 1.0))
    c = float(case.params.get("c", 1.0))
    info: dict = {}

    def integrate(f):
        return cell_integrals(mesh, f, quad)

    if case.physics == "darcy":
        kappa = case.kappa_cells(mesh.cell_centers)
        bc = boundary_data(sg, value=case.p, flux=_normal_flux(case.flux, 1))
        if opts.scheme == "tpfa":
            st = tpfa_reference(mesh, kappa, subgrid=sg)
        else:
            st = discretize_darcy(mesh, sg, kappa)
        g = None
        if case.gravity is not None:
            g = np.einsum("kij,j->ki", kappa, case.gravity).ravel()
        p, rep = solve_darcy(st, integrate(case.r_p), g, bc)
        fields, fluxes = {"p": p}, {"q": compute_fluxes(st, p, g, bc)}
        info["residual"] = rep.residual
    elif case.physics == "elasticity":
        msg = build_subgrid(mesh, opts.eta, opts.mech_quadrature())
        bc = boundary_data(msg, value=case.u, flux=_normal_flux(case.stress, 2), d=2)
        st = discretize_elasticity(mesh, msg, case.params["mu"], case.params["lam"], opts.mode)
        u, rep = solve_elasticity(st, integrate(case.r_u).ravel(), None, bc)
        fields, fluxes = {"u": u}, {"w": compute_tractions(st, u, None, bc)}
        info["residual"] = rep.residual
    elif case.physics == "biot":
        msg = build_subgrid(mesh, opts.eta, opts.mech_quadrature())
        params = BiotParams.create(nc, c=c, theta=theta, mu=case.params["mu"], lam=case.params["lam"])
        disc = discretize_biot(mesh, sg, params, mode=opts.mode, mech_subgrid=msg)
        bc_u = boundary_data(msg, value=case.u, flux=_normal_flux(case.stress, 2), d=2)
        bc_p = boundary_data(sg, value=case.p, flux=_normal_flux(case.flux, 1))
        disc.set_rhs(integrate(case.r_u).ravel(), integrate(case.r_p), bc_u, bc_p)
        sol, rep = disc.solve()
        fields = {"u": sol["u"], "p": sol["p"]}
        fluxes = {"q": disc.fluxes(sol["p"], bc_p), "w": disc.tractions(sol["u"], sol["p"], bc_u)}
        info["residual"] = rep.residual
    elif case.physics == "thermo":
        if opts.mode == STRONG:
            raise ValueError("the thermo-poroelastic system uses weak symmetry")
        params = ThermoParams.create(nc, theta=theta)
        disc = discretize_thermo(mesh, sg, params)
        bc_u = boundary_data(sg, value=case.u, flux=_normal_flux(case.stress, 2), d=2)
        bc_p = boundary_data(sg, value=case.p, flux=_normal_flux(case.flux, 1))
        bc_phi = boundary_data(sg, value=case.phi, flux=_normal_flux(case.heat_flux, 1))
        phi_b = np.where(mesh.face_cells[:, 1] == BOUNDARY, case.phi(mesh.face_centers), 0.0)
        disc.set_rhs(
            integrate(case.r_u).ravel(),
            integrate(case.r_p),
            integrate(case.r_phi),
            bc_u,
            bc_p,
            bc_phi,
            phi_boundary=phi_b,
            advection=bool(case.params.get("advection", True)),
        )
        sol, rep = picard_solve(disc, tol=opts.picard_tol)
        fields = dict(sol)
        fluxes = {
            "q": disc.fluxes(sol["p"]),
            "w": disc.tractions(sol["u"], sol["p"], sol["phi"], bc_u),
            "q_phi": disc.heat_fluxes(sol["phi"], sol["p"], bc_phi),
        }
        info.update(residual=rep.residual, iterations=rep.iterations)
    else:
        raise ValueError(f"unknown physics {case.physics!r}")
    report = error_metrics(case, mesh, fields, fluxes, theta=theta, c=c)
    return Solution(mesh, fields, fluxes, report, info)


def fit_rate(h, eps, last: int = 3) -> float:
    """Least-squares slope of log(eps) against log(h) over the last levels."""
    h = np.asarray(h, dtype=float)[-last:]
    eps = np.asarray(eps, dtype=float)[-last:]
    if np.any(~np.isfinite(eps)) or np.any(eps <= 0.0):
        return math.nan
    return float(np.polyfit(np.log(h), np.log(eps), 1)[0])


@dataclass
class RateTable:
    case: str
    family: str
    levels: list[int]
    reports: list[ErrorReport]
    config: dict

    @property
    def columns(self) -> tuple[str, ...]:
        extra = tuple(c for c in EXTRA_COLUMNS if any(not math.isnan(getattr(r, c)) for r in self.reports))
        return COLUMNS + extra

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.reports])

    def rate(self, name: str, last: int = 3) -> float:
        return fit_rate(self.series("h"), self.series(name), last)

    def rates(self, last: int = 3) -> dict[str, float]:
        return {c: self.rate(c, last) for c in self.columns}

    def to_csv(self, path: str | Path | None = None) -> str:
        cols = self.columns
        lines = [f"# config {config_hash(self.config)}"]
        lines.append(",".join(("level", "h", "dofs") + cols))
        for lvl, r in zip(self.levels, self.reports):
            vals = [str(lvl), f"{r.h:.17g}", str(r.dofs)] + [f"{getattr(r, c):.17g}" for c in cols]
            lines.append(",".join(vals))
        rates = self.rates()
        lines.append(",".join(["rate", "", ""] + [f"{rates[c]:.17g}" for c in cols]))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def convergence_study(
    case: AnalyticCase,
    family: str,
    levels,
    opts: StudyOptions = StudyOptions(),
) -> RateTable:
    levels = list(levels)
    if len(levels) < 3:
        raise ValueError("a rate study needs at least 3 levels")
    reports = []
    for lvl in levels:
        mesh = family_mesh(family, lvl, opts.perturbation, opts.seed)
        sol = solve_case(case, mesh, opts)
        rep = replace(sol.report, h=2.0**-lvl)
        logger.info("%s/%s level %d: %s", case.name, family, lvl, rep)
        reports.append(rep)
    config = {"case": case.name, "params": case.params, "family": family, "levels": levels, "options": asdict(opts)}
    return RateTable(case.name, family, levels, reports, config)
