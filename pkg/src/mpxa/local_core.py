"""Per-vertex local problems and their static condensation.

Around every vertex the potential is linear in each subcell, represented by
the cell-center value and a constant gradient ``h_k``. The subcell gradients
are eliminated either from a square system (continuity at one point per
subface, flux balance, boundary rows) or from the constrained least-squares
problem that penalizes potential jumps at subface quadrature points. The
resulting linear maps from cell values, external fields and boundary data to
gradients are collected into global sparse stencils by :func:`discretize_local`.

Gradients and fluxes are stored flattened row-major: a scalar potential has a
gradient in R^2; a displacement gradient is ``[du_x/dx, du_x/dy, du_y/dx,
du_y/dy]`` and stresses use the same layout.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sps

from mpxa.kernels import lu_solve
from mpxa.linsolve import TripletBuffer
from mpxa.mesh import BOUNDARY, DIRICHLET, FULL_QUADRATIC, NEUMANN, SubGrid

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-12
RANK_TOL = 1e-10
COND_WARN = 1e12

INPUTS = ("u", "chi", "neumann", "dirichlet")

# unit rotation generator; as(pi) has the single component (pi_01 - pi_10) / 2
_ROT = np.array([0.0, -1.0, 1.0, 0.0])
_ASYM = np.array([0.0, 0.5, -0.5, 0.0])


class LocalSystemError(RuntimeError):
    def __init__(self, message: str, vertex: int):
        super().__init__(f"vertex {vertex}: {message}")
        self.vertex = vertex


class SingularLocalSystem(LocalSystemError):
    """The square continuity/flux system at a vertex is singular."""


class RankDeficientKKT(LocalSystemError):
    """The constrained minimization at a vertex has no unique minimizer."""


# -- constitutive descriptions ---------------------------------------------------


def _as_tensor_field(value, nc: int, name: str) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.shape == (2, 2):
        a = np.broadcast_to(a, (nc, 2, 2))
    elif a.ndim == 0:
        a = np.broadcast_to(float(a) * np.eye(2), (nc, 2, 2))
    if a.shape != (nc, 2, 2):
        raise ValueError(f"{name} must be a 2x2 tensor per cell, got shape {a.shape}")
    return np.ascontiguousarray(a)


def _as_scalar_field(value, nc: int, name: str) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        a = np.full(nc, float(a))
    if a.shape != (nc,):
        raise ValueError(f"{name} must be one value per cell, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class ScalarPhysics:
    """Darcy-type law ``tau = -kappa grad p + g`` with ``kappa`` per cell."""

    kappa: np.ndarray
    d = 1
    n_extra = 0

    @classmethod
    def create(cls, kappa, nc: int) -> "ScalarPhysics":
        kappa = _as_tensor_field(kappa, nc, "kappa")
        if not np.allclose(kappa, kappa.transpose(0, 2, 1)):
            raise ValueError("kappa must be symmetric")
        if np.any(np.linalg.eigvalsh(kappa)[:, 0] <= 0.0):
            raise ValueError("kappa must be positive definite")
        return cls(kappa)

    def stress(self, k: int) -> np.ndarray:
        return -self.kappa[k]

    def extra(self, k: int) -> np.ndarray:
        return np.zeros((2, 0))


@dataclass(frozen=True)
class ElasticPhysics:
    """Isotropic Hooke's law with Lame pair (mu, lam) per cell.

    ``mode="strong"`` applies the law to the symmetric gradient. ``mode="weak"``
    applies ``2 mu G + lam tr(G) I`` to the full gradient plus one rotation
    unknown per vertex, and adds the dual-cell average symmetry row.
    """

    mu: np.ndarray
    lam: np.ndarray
    mode: str = "weak"
    d = 2

    @classmethod
    def create(cls, mu, lam, nc: int, mode: str = "weak") -> "ElasticPhysics":
        mu = _as_scalar_field(mu, nc, "mu")
        lam = _as_scalar_field(lam, nc, "lam")
        if np.any(mu <= 0.0) or np.any(lam < 0.0):
            raise ValueError("need mu > 0 and lam >= 0 in every cell")
        if mode not in ("strong", "weak"):
            raise ValueError(f"unknown symmetry mode {mode!r}")
        return cls(mu, lam, mode)

    @property
    def n_extra(self) -> int:
        return 1 if self.mode == "weak" else 0

    def stress(self, k: int) -> np.ndarray:
        mu, lam = self.mu[k], self.lam[k]
        trace = np.array([1.0, 0.0, 0.0, 1.0])
        if self.mode == "weak":
            return 2.0 * mu * np.eye(4) + lam * np.outer(trace, trace)
        sym = np.array(
            [[1.0, 0, 0, 0], [0, 0.5, 0.5, 0], [0, 0.5, 0.5, 0], [0, 0, 0, 1.0]]
        )
        return 2.0 * mu * sym + lam * np.outer(trace, trace)

    def extra(self, k: int) -> np.ndarray:
        if self.mode == "weak":
            return (2.0 * self.mu[k] * _ROT)[:, None]
        return np.zeros((4, 0))


def _normal_op(n: np.ndarray, d: int) -> np.ndarray:
    return n[None, :] if d == 1 else np.kron(np.eye(2), n[None, :])


def _point_op(r: np.ndarray, d: int) -> np.ndarray:
    return r[None, :] if d == 1 else np.kron(np.eye(2), r[None, :])


# -- local problem -------------------------------------------------------------


@dataclass
class RowGroup:
    """Rows ``A x = sum_i R[i] z_i`` of one constraint family."""

    A: np.ndarray
    rhs: dict[str, np.ndarray] = field(default_factory=dict)
    weights: np.ndarray | None = None

    @property
    def rows(self) -> int:
        return self.A.shape[0]


@dataclass
class LocalProblem:
    vertex: int
    cells: np.ndarray
    subfaces: np.ndarray
    internal: np.ndarray
    neumann: np.ndarray
    dirichlet: np.ndarray
    subcells: np.ndarray
    d: int
    grad_size: int
    n_unknowns: int
    input_sizes: dict[str, int]
    continuity: RowGroup
    flux_balance: RowGroup
    neumann_rows: RowGroup
    dirichlet_rows: RowGroup
    symmetry: RowGroup
    flux: np.ndarray
    flux_chi: np.ndarray
    stress: np.ndarray

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_gradients(self) -> int:
        return self.n_cells * self.grad_size

    def groups(self) -> list[tuple[str, RowGroup]]:
        return [
            ("continuity", self.continuity),
            ("flux_balance", self.flux_balance),
            ("neumann", self.neumann_rows),
            ("dirichlet", self.dirichlet_rows),
            ("symmetry", self.symmetry),
        ]

    def stacked(self, names) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        picked = [g for n, g in self.groups() if n in names]
        A = np.vstack([g.A for g in picked])
        R = {}
        for key in INPUTS:
            size = self.input_sizes[key]
            R[key] = np.vstack([g.rhs.get(key, np.zeros((g.rows, size))) for g in picked])
        return A, R

    def constraint_residual(self, maps: "CondensationMaps", include_continuity: bool = False) -> float:
        """Largest relative violation of the hard rows by the condensed maps."""
        names = ["flux_balance", "neumann", "dirichlet", "symmetry"]
        if include_continuity:
            names.append("continuity")
        A, R = self.stacked(names)
        if A.shape[0] == 0:
            return 0.0
        worst = 0.0
        for key in INPUTS:
            if R[key].shape[1] == 0:
                continue
            lhs = A @ maps.S[key]
            scale = max(np.abs(A).sum(axis=1).max() * np.abs(maps.S[key]).max(), np.abs(R[key]).max(), 1e-300)
            worst = max(worst, float(np.abs(lhs - R[key]).max() / scale))
        return worst

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# vertex {self.vertex} cells {self.cells.tolist()}\n")
            for name, g in self.groups():
                fh.write(f"# {name} {g.A.shape}\n")
                np.savetxt(fh, g.A, fmt="%.17g")


@dataclass
class CondensationMaps:
    """Gradient (and rotation) unknowns as linear maps of the local inputs."""

    S: dict[str, np.ndarray]
    residual: float
    relative_residual: float
    method: str
    cond: float = 1.0

    @property
    def S_u(self) -> np.ndarray:
        return self.S["u"]

    @property
    def S_g(self) -> np.ndarray:
        return self.S["chi"]

    @property
    def S_N(self) -> np.ndarray:
        return self.S["neumann"]

    @property
    def S_D(self) -> np.ndarray:
        return self.S["dirichlet"]


def build_local(subgrid: SubGrid, vertex: int, physics, tags: np.ndarray | None = None) -> LocalProblem:
    """Assemble the local rows around ``vertex``.

    ``tags`` holds one boundary tag per face (defaults to the mesh tags);
    interior faces must be tagged ``INTERIOR``.
    """
    mesh = subgrid.mesh
    tags = mesh.face_tags if tags is None else tags
    d = physics.d
    g = 2 * d
    subcells = subgrid.subcells_of(vertex)
    cells = subgrid.subcell_cell[subcells]
    nc = len(cells)
    if nc == 0:
        raise LocalSystemError("vertex touches no cell", vertex)
    local = {int(k): i for i, k in enumerate(cells)}
    n_extra = physics.n_extra
    nx = nc * g + n_extra

    full = []
    for k in cells:
        Bk = np.zeros((g, nx))
        i = local[int(k)]
        Bk[:, i * g : (i + 1) * g] = physics.stress(int(k))
        if n_extra:
            Bk[:, nc * g :] = physics.extra(int(k))
        full.append(Bk)

    sfs = subgrid.subfaces_of(vertex)
    internal, neumann, dirichlet = [], [], []
    for sf in sfs:
        f = subgrid.subface_face[sf]
        if mesh.face_cells[f, 1] != BOUNDARY:
            internal.append(sf)
        elif tags[f] == NEUMANN:
            neumann.append(sf)
        elif tags[f] == DIRICHLET:
            dirichlet.append(sf)
        else:
            raise LocalSystemError(f"boundary face {f} has no boundary tag", vertex)
    nN, nD = len(neumann), len(dirichlet)
    sizes = {"u": nc * d, "chi": nc * g, "neumann": nN * d, "dirichlet": nD * d}
    eye_d = np.eye(d)

    def cell_cols(i: int, width: int) -> slice:
        return slice(i * width, (i + 1) * width)

    # potential continuity at quadrature points of internal subfaces
    cA, cU, cw = [], [], []
    fA, fX = [], []
    for sf in internal:
        f = subgrid.subface_face[sf]
        i1, i2 = local[int(mesh.face_cells[f, 0])], local[int(mesh.face_cells[f, 1])]
        x1, x2 = mesh.cell_centers[cells[i1]], mesh.cell_centers[cells[i2]]
        pts, wts = subgrid.quadrature_of(sf)
        for p, w in zip(pts, wts):
            row = np.zeros((d, nx))
            row[:, cell_cols(i1, g)] = _point_op(p - x1, d)
            row[:, cell_cols(i2, g)] -= _point_op(p - x2, d)
            ru = np.zeros((d, sizes["u"]))
            ru[:, cell_cols(i1, d)] = -eye_d
            ru[:, cell_cols(i2, d)] += eye_d
            cA.append(row)
            cU.append(ru)
            cw.append(np.full(d, w))
        N = subgrid.subface_areas[sf] * _normal_op(mesh.face_normals[f], d)
        fA.append(N @ (full[i1] - full[i2]))
        rx = np.zeros((d, sizes["chi"]))
        rx[:, cell_cols(i1, g)] = -N
        rx[:, cell_cols(i2, g)] += N
        fX.append(rx)

    nA, nX, nQ = [], [], []
    for j, sf in enumerate(neumann):
        f = subgrid.subface_face[sf]
        i = local[int(mesh.face_cells[f, 0])]
        N = subgrid.subface_areas[sf] * _normal_op(mesh.face_normals[f], d)
        nA.append(N @ full[i])
        rx = np.zeros((d, sizes["chi"]))
        rx[:, cell_cols(i, g)] = -N
        nX.append(rx)
        rq = np.zeros((d, sizes["neumann"]))
        rq[:, cell_cols(j, d)] = eye_d
        nQ.append(rq)

    dA, dU, dD = [], [], []
    for j, sf in enumerate(dirichlet):
        f = subgrid.subface_face[sf]
        i = local[int(mesh.face_cells[f, 0])]
        row = np.zeros((d, nx))
        row[:, cell_cols(i, g)] = _point_op(subgrid.continuity_points[sf] - mesh.cell_centers[cells[i]], d)
        ru = np.zeros((d, sizes["u"]))
        ru[:, cell_cols(i, d)] = -eye_d
        rd = np.zeros((d, sizes["dirichlet"]))
        rd[:, cell_cols(j, d)] = eye_d
        dA.append(row)
        dU.append(ru)
        dD.append(rd)

    sA, sX = np.zeros((0, nx)), np.zeros((0, sizes["chi"]))
    if n_extra:
        vols = subgrid.subcell_volumes[subcells]
        sA = sum(v * _ASYM @ B for v, B in zip(vols, full))[None, :]
        sX = np.zeros((1, sizes["chi"]))
        for i, v in enumerate(vols):
            sX[0, cell_cols(i, g)] = -v * _ASYM

    def stack(blocks, width):
        return np.vstack(blocks) if blocks else np.zeros((0, width))

    continuity = RowGroup(stack(cA, nx), {"u": stack(cU, sizes["u"])}, np.concatenate(cw) if cw else np.zeros(0))
    flux_balance = RowGroup(stack(fA, nx), {"chi": stack(fX, sizes["chi"])})
    neumann_rows = RowGroup(stack(nA, nx), {"chi": stack(nX, sizes["chi"]), "neumann": stack(nQ, sizes["neumann"])})
    dirichlet_rows = RowGroup(stack(dA, nx), {"u": stack(dU, sizes["u"]), "dirichlet": stack(dD, sizes["dirichlet"])})
    symmetry = RowGroup(sA, {"chi": sX})

    # lower-side normal flux of every subface of the vertex
    T = np.zeros((len(sfs) * d, nx))
    Tchi = np.zeros((len(sfs) * d, sizes["chi"]))
    for j, sf in enumerate(sfs):
        f = subgrid.subface_face[sf]
        i = local[int(mesh.face_cells[f, 0])]
        N = subgrid.subface_areas[sf] * _normal_op(mesh.face_normals[f], d)
        T[j * d : (j + 1) * d] = N @ full[i]
        Tchi[j * d : (j + 1) * d, cell_cols(i, g)] = N

    return LocalProblem(
        vertex=int(vertex),
        cells=cells,
        subfaces=sfs,
        internal=np.array(internal, dtype=np.int64),
        neumann=np.array(neumann, dtype=np.int64),
        dirichlet=np.array(dirichlet, dtype=np.int64),
        subcells=subcells,
        d=d,
        grad_size=g,
        n_unknowns=nx,
        input_sizes=sizes,
        continuity=continuity,
        flux_balance=flux_balance,
        neumann_rows=neumann_rows,
        dirichlet_rows=dirichlet_rows,
        symmetry=symmetry,
        flux=T,
        flux_chi=Tchi,
        stress=np.vstack(full),
    )


def _split(X: np.ndarray, lp: LocalProblem) -> dict[str, np.ndarray]:
    out, start = {}, 0
    for key in INPUTS:
        size = lp.input_sizes[key]
        out[key] = X[:, start : start + size]
        start += size
    return out


def _penalty(lp: LocalProblem, S: dict[str, np.ndarray]) -> tuple[float, float]:
    g = lp.continuity
    if g.rows == 0:
        return 0.0, 0.0
    w = np.sqrt(g.weights)[:, None]
    total = ref = 0.0
    for key in INPUTS:
        R = g.rhs.get(key, np.zeros((g.rows, lp.input_sizes[key])))
        total += float((w * (g.A @ S[key] - R)) .ravel() @ (w * (g.A @ S[key] - R)).ravel())
        ref += float(((w * R) ** 2).sum())
    return total, total / ref if ref > 0.0 else total


def condense_direct(lp: LocalProblem, subgrid: SubGrid | None = None) -> CondensationMaps:
    """Eliminate the gradients from the square continuity/flux/boundary system."""
    A, R = lp.stacked(["continuity", "flux_balance", "neumann", "dirichlet", "symmetry"])
    if A.shape[0] != A.shape[1]:
        raise SingularLocalSystem(f"local system is {A.shape[0]}x{A.shape[1]}, not square", lp.vertex)
    rhs = np.hstack([R[key] for key in INPUTS])
    X, worst, bad = lu_solve(A, rhs, PIVOT_TOL)
    if bad >= 0:
        raise SingularLocalSystem(f"pivot below {PIVOT_TOL:g} x row norm at local row {bad}", lp.vertex)
    cond = 1.0 / worst
    if cond > COND_WARN:
        logger.warning("vertex %d: local condition estimate %.2e", lp.vertex, cond)
    S = _split(X, lp)
    res, rel = _penalty(lp, S)
    return CondensationMaps(S, res, rel, "direct", cond)


def condense_minimize(lp: LocalProblem, subgrid: SubGrid | None = None) -> CondensationMaps:
    """Minimize the weighted potential-jump penalty subject to the hard rows.

    Flux balance, Neumann, Dirichlet and symmetry rows are hard constraints;
    redundant ones are removed by a pivoted QR before the KKT solve.
    """
    H, RH = lp.stacked(["flux_balance", "neumann", "dirichlet", "symmetry"])
    nx = lp.n_unknowns
    rhs_h = np.hstack([RH[key] for key in INPUTS])
    if H.shape[0]:
        norms = np.linalg.norm(H, axis=1)
        keep = norms > 0.0
        H, rhs_h, norms = H[keep], rhs_h[keep], norms[keep]
        H = H / norms[:, None]
        rhs_h = rhs_h / norms[:, None]
        _, Rq, piv = scipy.linalg.qr(H.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(Rq))
        rank = int(np.sum(diag > RANK_TOL * diag[0])) if len(diag) else 0
        if rank < H.shape[0]:
            dropped = np.sort(piv[rank:])
            logger.info("vertex %d: dropped %d redundant constraint rows %s", lp.vertex, len(dropped), dropped.tolist())
            kept = np.sort(piv[:rank])
            H, rhs_h = H[kept], rhs_h[kept]

    g = lp.continuity
    w = g.weights if g.rows else np.zeros(0)
    O = g.A
    rhs_o = np.hstack([g.rhs.get(key, np.zeros((g.rows, lp.input_sizes[key]))) for key in INPUTS])
    hess = O.T @ (w[:, None] * O)
    grad = O.T @ (w[:, None] * rhs_o)
    scale = np.abs(hess).max() if hess.size and np.abs(hess).max() > 0.0 else 1.0
    hess, grad = hess / scale, grad / scale

    m = H.shape[0]
    K = np.zeros((nx + m, nx + m))
    K[:nx, :nx] = hess
    K[:nx, nx:] = H.T
    K[nx:, :nx] = H
    rhs = np.vstack([grad, rhs_h])
    sol, worst, bad = lu_solve(K, rhs, PIVOT_TOL)
    method = "minimize"
    if bad >= 0:
        sol = _min_norm_if_unobservable(K, rhs, lp, nx)
        worst, method = 1e-16, "minimize-minnorm"
    S = _split(sol[:nx], lp)
    res, rel = _penalty(lp, S)
    return CondensationMaps(S, res, rel, method, 1.0 / worst)


def _min_norm_if_unobservable(K: np.ndarray, rhs: np.ndarray, lp: LocalProblem, nx: int) -> np.ndarray:
    """Minimum-norm KKT solution when the free directions carry no stress.

    At a vertex whose subfaces all carry traction data, the rotation part of
    the subcell gradient is not determined. It never enters fluxes or
    stresses, so the minimum-norm choice is harmless; any other kernel is an
    error.
    """
    _, s, Vt = np.linalg.svd(K)
    kernel = Vt[s <= RANK_TOL * s[0]][:, :nx]
    leak = np.abs(lp.stress @ kernel.T).max() if len(kernel) else 0.0
    if leak > 1e-8 * max(np.abs(lp.stress).max(), 1e-300):
        raise RankDeficientKKT("penalty is not definite on the constraint nullspace", lp.vertex)
    logger.info("vertex %d: %d stress-free gradient directions fixed by minimum norm", lp.vertex, len(kernel))
    return scipy.linalg.lstsq(K, rhs, cond=RANK_TOL)[0]


def condense(lp: LocalProblem, subgrid: SubGrid, method: str = "auto") -> CondensationMaps:
    """``auto``: direct for single-point rules, falling back to minimization."""
    if method == "direct":
        return condense_direct(lp, subgrid)
    if method == "minimize" or subgrid.quadrature == FULL_QUADRATIC:
        return condense_minimize(lp, subgrid)
    try:
        return condense_direct(lp, subgrid)
    except SingularLocalSystem as exc:
        maps = condense_minimize(lp, subgrid)
        logger.info("%s; minimization fallback residual %.3e", exc, maps.residual)
        return maps


# -- global assembly -------------------------------------------------------------


@dataclass(frozen=True)
class LocalStencils:
    """Global maps produced by condensing every vertex.

    ``flux_*``: (faces*d) rows of lower-side normal flux; ``grad_*``:
    (subcells*2d) rows of subcell gradients; ``stress_*``: (subcells*2d) rows
    of subcell flux/stress tensors. Columns: ``u`` cells*d, ``chi`` cells*2d,
    ``bc`` boundary subfaces*d (Dirichlet and Neumann data share one vector).
    """

    d: int
    flux_u: sps.csr_matrix
    flux_chi: sps.csr_matrix
    flux_bc: sps.csr_matrix
    grad_u: sps.csr_matrix
    grad_chi: sps.csr_matrix
    grad_bc: sps.csr_matrix
    stress_u: sps.csr_matrix
    stress_chi: sps.csr_matrix
    stress_bc: sps.csr_matrix
    max_residual: float
    methods: dict


def discretize_local(subgrid: SubGrid, physics, tags: np.ndarray | None = None, method: str = "auto") -> LocalStencils:
    mesh = subgrid.mesh
    tags = mesh.face_tags if tags is None else np.asarray(tags)
    d = physics.d
    g = 2 * d
    nf, nc, nsc = mesh.num_faces, mesh.num_cells, subgrid.num_subcells
    nb = subgrid.num_boundary_subfaces
    buf = {
        "flux_u": TripletBuffer((nf * d, nc * d)),
        "flux_chi": TripletBuffer((nf * d, nc * g)),
        "flux_bc": TripletBuffer((nf * d, nb * d)),
        "grad_u": TripletBuffer((nsc * g, nc * d)),
        "grad_chi": TripletBuffer((nsc * g, nc * g)),
        "grad_bc": TripletBuffer((nsc * g, nb * d)),
        "stress_u": TripletBuffer((nsc * g, nc * d)),
        "stress_chi": TripletBuffer((nsc * g, nc * g)),
        "stress_bc": TripletBuffer((nsc * g, nb * d)),
    }
    comp_d = np.arange(d)
    comp_g = np.arange(g)
    worst = 0.0
    methods: dict[str, int] = {}
    for s in range(mesh.num_vertices):
        if subgrid.dual_cell_ptr[s] == subgrid.dual_cell_ptr[s + 1]:
            continue
        lp = build_local(subgrid, s, physics, tags)
        maps = condense(lp, subgrid, method)
        methods[maps.method] = methods.get(maps.method, 0) + 1
        worst = max(worst, maps.relative_residual)

        cols = {
            "u": (lp.cells[:, None] * d + comp_d).ravel(),
            "chi": (lp.cells[:, None] * g + comp_g).ravel(),
        }
        bsub = np.concatenate([lp.neumann, lp.dirichlet])
        bcols = (subgrid.boundary_index[bsub][:, None] * d + comp_d).ravel()
        S_bc = np.hstack([maps.S["neumann"], maps.S["dirichlet"]])

        frows = (subgrid.subface_face[lp.subfaces][:, None] * d + comp_d).ravel()
        grows = (lp.subcells[:, None] * g + comp_g).ravel()
        ng = lp.n_gradients

        buf["flux_u"].add_block(frows, cols["u"], lp.flux @ maps.S["u"])
        buf["flux_chi"].add_block(frows, cols["chi"], lp.flux @ maps.S["chi"] + lp.flux_chi)
        buf["grad_u"].add_block(grows, cols["u"], maps.S["u"][:ng])
        buf["grad_chi"].add_block(grows, cols["chi"], maps.S["chi"][:ng])
        buf["stress_u"].add_block(grows, cols["u"], lp.stress @ maps.S["u"])
        buf["stress_chi"].add_block(grows, cols["chi"], lp.stress @ maps.S["chi"] + np.eye(ng))
        if len(bcols):
            buf["flux_bc"].add_block(frows, bcols, lp.flux @ S_bc)
            buf["grad_bc"].add_block(grows, bcols, S_bc[:ng])
            buf["stress_bc"].add_block(grows, bcols, lp.stress @ S_bc)

    logger.debug("condensation methods used: %s", methods)
    mats = {k: b.tocsr() for k, b in buf.items()}
    return LocalStencils(d=d, max_residual=worst, methods=methods, **mats)
