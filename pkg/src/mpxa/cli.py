"""Command line entry point.

Subcommands: ``mesh gen``, ``discretize``, ``run``, ``convergence`` and
``check-monotone``. Runs are driven by a JSON config mirroring
:class:`RunConfig`; flags override config entries. Every artifact starts
with (or, for mesh JSON, carries in ``meta``) the sha256 of the config that
produced it. Exit codes: 0 success, 1 invalid input, 2 solver failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from mpxa.linsolve import dump_coo, load_coo
from mpxa.mesh import FULL_QUADRATIC, SINGLE_POINT, Mesh, MeshSpec, generate_mesh, load_mesh, save_mesh

logger = logging.getLogger("mpxa")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SOLVER = 2

PHYSICS = ("darcy", "elasticity", "biot", "thermo")
FIELD_NAMES = {
    "darcy": ("p",),
    "elasticity": ("u_x", "u_y"),
    "biot": ("u_x", "u_y", "p"),
    "thermo": ("u_x", "u_y", "p", "phi"),
}


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; we reserve 2 for solver failures
    def error(self, message: str):
        raise UsageError(message)


@dataclass
class RunConfig:
    """Everything a run depends on. ``out`` is where artifacts go and is not hashed."""

    physics: str = "darcy"
    mesh: dict | str = field(default_factory=lambda: {"kind": "cartesian", "n": 8, "perturbation": 0.0})
    eta: float = 0.0
    quadrature: str | None = None
    mode: str = "weak"
    scheme: str = "mpfa"
    bc: str = "dirichlet"
    case: str | None = None
    expression: str | list | None = None
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        return cls.from_dict(data)

    def validate(self) -> None:
        if self.physics not in PHYSICS:
            raise UsageError(f"physics must be one of {', '.join(PHYSICS)}")
        if self.quadrature not in (None, SINGLE_POINT, FULL_QUADRATIC):
            raise UsageError(f"quadrature must be {SINGLE_POINT!r} or {FULL_QUADRATIC!r}")
        if self.mode not in ("weak", "strong"):
            raise UsageError("mode must be 'weak' or 'strong'")
        if self.scheme not in ("mpfa", "tpfa"):
            raise UsageError("scheme must be 'mpfa' or 'tpfa'")
        if self.bc not in ("dirichlet", "neumann", "mesh"):
            raise UsageError("bc must be 'dirichlet', 'neumann' or 'mesh'")
        if not 0.0 <= float(self.eta) < 1.0:
            raise UsageError("eta must lie in [0, 1)")
        if not isinstance(self.mesh, (str, dict)):
            raise UsageError("mesh must be a path or a generator spec")

    def hashed(self) -> dict:
        data = asdict(self)
        data.pop("out")
        return data

    def digest(self) -> str:
        from mpxa.verify.convergence import config_hash

        return config_hash(self.hashed())


def _mesh_from(cfg: RunConfig) -> Mesh:
    if isinstance(cfg.mesh, str):
        mesh = load_mesh(cfg.mesh)
    else:
        spec = dict(cfg.mesh)
        spec.setdefault("seed", cfg.seed)
        try:
            mesh = generate_mesh(MeshSpec(**spec))
        except TypeError as exc:
            raise UsageError(f"bad mesh spec: {exc}") from exc
    return mesh if cfg.bc == "mesh" else mesh.all_tagged(cfg.bc)


def _case_from(cfg: RunConfig):
    from mpxa.verify.cases import expression_case, make_case

    if cfg.case is not None:
        case = make_case(cfg.case, **cfg.params)
        if case.physics != cfg.physics:
            raise UsageError(f"case {cfg.case!r} is a {case.physics} case, not {cfg.physics}")
        return case
    if cfg.physics in ("biot", "thermo"):
        raise UsageError(f"{cfg.physics} runs need an analytic case (--case)")
    default = "0" if cfg.physics == "darcy" else ["0", "0"]
    extra = {k: v for k, v in cfg.params.items() if k in ("kappa", "mu", "lam")}
    return expression_case(cfg.physics, cfg.expression if cfg.expression is not None else default, **extra)


def _options(cfg: RunConfig):
    from mpxa.verify.convergence import StudyOptions

    return StudyOptions(eta=float(cfg.eta), quadrature=cfg.quadrature, mode=cfg.mode, seed=cfg.seed, scheme=cfg.scheme)


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _parse_levels(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = text.split("..")
            levels = list(range(int(lo), int(hi) + 1))
        else:
            levels = [int(t) for t in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad level list {text!r}") from exc
    if len(levels) < 3:
        raise UsageError("need at least 3 levels")
    return levels


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _params(pairs: list[str] | None) -> dict:
    out = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"expected key=value, got {item!r}")
        out[key] = _parse_value(value)
    return out


def _config(args) -> RunConfig:
    data = asdict(RunConfig.load(args.config)) if args.config else {}
    overrides = {
        "physics": args.physics,
        "eta": args.eta,
        "quadrature": args.quadrature,
        "mode": args.mode,
        "scheme": args.scheme,
        "bc": args.bc,
        "case": args.case,
        "seed": args.seed,
        "out": args.out,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.mesh is not None:
        # inline generator spec or a path
        data["mesh"] = _parse_value(args.mesh) if args.mesh.lstrip().startswith("{") else args.mesh
    if args.expr is not None:
        data["expression"] = args.expr if len(args.expr) > 1 else args.expr[0]
    if args.param:
        data["params"] = {**data.get("params", {}), **_params(args.param)}
    return RunConfig.from_dict(data)


# -- subcommands -----------------------------------------------------------------


def cmd_mesh_gen(args) -> int:
    spec = MeshSpec(args.kind, args.n, args.perturbation, args.seed)
    config = {"command": "mesh gen", **asdict(spec), "bc": args.bc}
    from mpxa.verify.convergence import config_hash

    mesh = generate_mesh(spec)
    tags = {tuple(int(v) for v in mesh.face_vertices[f]): args.bc for f in mesh.boundary_faces}
    mesh = Mesh.from_cells(mesh.vertices, mesh.cells, tags, {**mesh.meta, "config_hash": config_hash(config)})
    save_mesh(mesh, args.out)
    print(f"{args.out}: {mesh.num_cells} cells, {mesh.num_faces} faces")
    return EXIT_OK


def cmd_discretize(args) -> int:
    from mpxa.coupled import BiotParams, ThermoParams, discretize_biot, discretize_thermo
    from mpxa.mesh import build_subgrid
    from mpxa.mpfa import discretize_darcy
    from mpxa.mpsa import discretize_elasticity

    cfg = _config(args)
    mesh = _mesh_from(cfg)
    opts = _options(cfg)
    sg = build_subgrid(mesh, cfg.eta, opts.flow_quadrature())
    msg = build_subgrid(mesh, cfg.eta, opts.mech_quadrature())
    p = cfg.params
    nc = mesh.num_cells
    if cfg.physics == "darcy":
        st = discretize_darcy(mesh, sg, p.get("kappa", 1.0))
        mats = {"A": st.matrix(), "Q_p": st.Q_p, "Q_bc": st.Q_bc, "div": st.div}
    elif cfg.physics == "elasticity":
        st = discretize_elasticity(mesh, msg, p.get("mu", 1.0), p.get("lam", 1.0), cfg.mode)
        mats = {"A": st.matrix(), "W_u": st.W_u, "W_bc": st.W_bc, "div": st.div}
    elif cfg.physics == "biot":
        keys = ("alpha", "c", "theta", "kappa", "mu", "lam")
        disc = discretize_biot(mesh, sg, BiotParams.create(nc, **{k: p[k] for k in keys if k in p}), mode=cfg.mode, mech_subgrid=msg)
        mats = {"A": disc.system.matrix(), "J_u": disc.J_u, "J_p": disc.J_p, "W_p": disc.W_p}
    else:
        names = {f.name for f in fields(ThermoParams)}
        disc = discretize_thermo(mesh, sg, ThermoParams.create(nc, **{k: v for k, v in p.items() if k in names}))
        mats = {"A": disc.system.matrix()}
    out = Path(cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    header = f"config {cfg.digest()}"
    for name, M in mats.items():
        dump_coo(M, out / f"{name}.coo", header)
        print(f"{out / (name + '.coo')}: {M.shape[0]}x{M.shape[1]}, {M.nnz} nonzeros")
    return EXIT_OK


def cmd_run(args) -> int:
    from mpxa.verify.convergence import solve_case

    cfg = _config(args)
    mesh = _mesh_from(cfg)
    case = _case_from(cfg)
    sol = solve_case(case, mesh, _options(cfg))
    names = FIELD_NAMES[cfg.physics]
    cols = []
    for name in names:
        if name.startswith("u_"):
            cols.append(np.asarray(sol.fields["u"]).reshape(-1, 2)[:, "xy".index(name[-1])])
        else:
            cols.append(np.asarray(sol.fields[name]))
    lines = [f"# config {cfg.digest()}", ",".join(("cell", "x", "y") + names)]
    for k in range(mesh.num_cells):
        vals = [mesh.cell_centers[k, 0], mesh.cell_centers[k, 1]] + [c[k] for c in cols]
        lines.append(",".join([str(k)] + [f"{v:.17g}" for v in vals]))
    _emit("\n".join(lines) + "\n", cfg.out)
    logger.info("residual %.3e", sol.info.get("residual", float("nan")))
    return EXIT_OK


def cmd_convergence(args) -> int:
    from dataclasses import replace

    from mpxa.verify.cases import make_case
    from mpxa.verify.convergence import StudyOptions, convergence_study

    case = make_case(args.case, **_params(args.param))
    opts = StudyOptions(
        eta=args.eta,
        quadrature=args.quadrature,
        mode=args.mode,
        perturbation=args.perturbation,
        seed=args.seed,
        scheme=args.scheme,
    )
    if args.picard_tol is not None:
        opts = replace(opts, picard_tol=args.picard_tol)
    table = convergence_study(case, args.grid, _parse_levels(args.levels), opts)
    text = table.to_csv()
    _emit(text, args.out)
    if args.out is not None:
        for name, rate in table.rates().items():
            print(f"{name} rate {rate:.3f}")
    return EXIT_OK


def cmd_check_monotone(args) -> int:
    from mpxa.mesh import build_subgrid
    from mpxa.mpfa import discretize_darcy
    from mpxa.verify.monotone import monotonicity_check

    if args.matrix is not None:
        A = load_coo(args.matrix)
    else:
        if args.mesh is not None:
            mesh = load_mesh(args.mesh)
        else:
            mesh = generate_mesh(MeshSpec(args.kind, args.n, args.perturbation, args.seed))
        mesh = mesh.all_tagged("dirichlet")
        kappa = np.asarray(_parse_value(args.kappa), dtype=float)
        A = discretize_darcy(mesh, build_subgrid(mesh, args.eta), kappa).matrix()
    report = monotonicity_check(A, args.mode)
    print(report.summary())
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--physics", choices=PHYSICS)
    p.add_argument("--mesh", help="mesh JSON file or inline generator spec")
    p.add_argument("--eta", type=float)
    p.add_argument("--quadrature", choices=(SINGLE_POINT, FULL_QUADRATIC))
    p.add_argument("--mode", choices=("weak", "strong"))
    p.add_argument("--scheme", choices=("mpfa", "tpfa"))
    p.add_argument("--bc", choices=("dirichlet", "neumann", "mesh"))
    p.add_argument("--case", help="analytic case providing data and sources")
    p.add_argument("--expr", nargs="+", help="exact field expression(s) in x, y")
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mpxa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    mesh = sub.add_parser("mesh", help="mesh utilities")
    msub = mesh.add_subparsers(dest="mesh_command", required=True, parser_class=_Parser)
    gen = msub.add_parser("gen", help="generate a unit-square grid")
    gen.add_argument("--kind", default="cartesian", choices=MeshSpec.KINDS)
    gen.add_argument("--n", type=int, default=8)
    gen.add_argument("--perturbation", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--bc", default="dirichlet", choices=("dirichlet", "neumann"))
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_mesh_gen)

    disc = sub.add_parser("discretize", help="assemble and dump matrices")
    _run_flags(disc)
    disc.set_defaults(func=cmd_discretize)

    run = sub.add_parser("run", help="solve one case and write cell fields")
    _run_flags(run)
    run.set_defaults(func=cmd_run)

    conv = sub.add_parser("convergence", help="rate study over grid levels")
    conv.add_argument("--case", required=True)
    conv.add_argument("--grid", required=True)
    conv.add_argument("--levels", default="3..6")
    conv.add_argument("--eta", type=float, default=0.0)
    conv.add_argument("--quadrature", choices=(SINGLE_POINT, FULL_QUADRATIC), help="default: full for strong mode, else single")
    conv.add_argument("--mode", default="weak", choices=("weak", "strong"))
    conv.add_argument("--scheme", default="mpfa", choices=("mpfa", "tpfa"))
    conv.add_argument("--perturbation", type=float)
    conv.add_argument("--seed", type=int, default=0)
    conv.add_argument("--picard-tol", type=float)
    conv.add_argument("--param", action="append", metavar="KEY=VALUE")
    conv.add_argument("--out")
    conv.set_defaults(func=cmd_convergence)

    mono = sub.add_parser("check-monotone", help="M-matrix and inverse-positivity checks")
    mono.add_argument("--matrix", help="COO file written by 'discretize'")
    mono.add_argument("--mesh")
    mono.add_argument("--kind", default="cartesian", choices=MeshSpec.KINDS)
    mono.add_argument("--n", type=int, default=8)
    mono.add_argument("--perturbation", type=float, default=0.0)
    mono.add_argument("--seed", type=int, default=0)
    mono.add_argument("--eta", type=float, default=0.0)
    mono.add_argument("--kappa", default="1.0", help="scalar or 2x2 JSON list")
    mono.add_argument("--mode", default="m_matrix", choices=("m_matrix", "inverse_positivity"))
    mono.set_defaults(func=cmd_check_monotone)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"mpxa: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except RuntimeError as exc:  # singular systems, local failures, Picard divergence
        print(f"mpxa: solver failure: {type(exc).__name__}: {exc}".splitlines()[0], file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"mpxa: error: {exc}".splitlines()[0], file=sys.stderr)
        return EXIT_INVALID


run_command = main

if __name__ == "__main__":
    sys.exit(main())
