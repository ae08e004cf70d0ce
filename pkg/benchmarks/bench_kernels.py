"""Compare the compiled kernels with the pure-Python fallback.

Times the two hot kernels on inputs shaped like the real workload (many
small dense local solves; one large triplet reduction) and an end-to-end
MPSA discretization with each backend. Results must agree exactly for
``coalesce`` and to rounding for ``lu_solve``.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
from __future__ import annotations

import argparse
import importlib
import os
import subprocess
import sys
import timeit

import numpy as np

from mpxa import _kernels_py as pure

try:
    from mpxa import _kernels as compiled
except ImportError:
    compiled = None


def local_systems(count: int, size: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((count, size, size)) + size * np.eye(size)
    B = rng.standard_normal((count, size, 3 * size))
    return A, B


def triplets(n: int, nnz: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return rng.integers(0, n, nnz), rng.integers(0, n, nnz), rng.standard_normal(nnz)


def time_call(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_lu(repeat: int) -> None:
    for size in (8, 24, 48):
        A, B = local_systems(200, size)

        def run(mod):
            return [mod.lu_solve(a, b, 1e-12)[0] for a, b in zip(A, B)]

        t_py = time_call(lambda: run(pure), repeat)
        line = f"lu_solve  200 x {size:2d}x{size:<2d}  python {t_py * 1e3:8.2f} ms"
        if compiled is not None:
            t_c = time_call(lambda: run(compiled), repeat)
            diff = max(np.abs(x - y).max() for x, y in zip(run(pure), run(compiled)))
            line += f"  compiled {t_c * 1e3:8.2f} ms  speedup {t_py / t_c:6.1f}x  max diff {diff:.1e}"
        print(line)


def bench_coalesce(repeat: int) -> None:
    for n, nnz in ((2_000, 100_000), (20_000, 1_000_000)):
        r, c, v = triplets(n, nnz)
        t_py = time_call(lambda: pure.coalesce(r, c, v, n, n), repeat)
        line = f"coalesce  {nnz:>9,d} triplets  python {t_py * 1e3:8.2f} ms"
        if compiled is not None:
            t_c = time_call(lambda: compiled.coalesce(r, c, v, n, n), repeat)
            same = all(np.array_equal(a, b) for a, b in zip(pure.coalesce(r, c, v, n, n), compiled.coalesce(r, c, v, n, n)))
            line += f"  compiled {t_c * 1e3:8.2f} ms  speedup {t_py / t_c:6.1f}x  identical {same}"
        print(line)


END_TO_END = """
import time
from mpxa.kernels import BACKEND
from mpxa.mesh import MeshSpec, build_subgrid, generate_mesh
from mpxa.mpsa import discretize_elasticity
m = generate_mesh(MeshSpec("perturbed_quad", 32, 0.2, 1))
sg = build_subgrid(m)
t = time.perf_counter()
discretize_elasticity(m, sg, 1.0, 1.0)
print(BACKEND, time.perf_counter() - t)
"""


def bench_end_to_end() -> None:
    # the backend is fixed at import, so each one runs in a fresh interpreter
    for flag in ("0", "1"):
        env = dict(os.environ, MPXA_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        backend, seconds = out.stdout.split()
        print(f"MPSA discretization, 32x32 perturbed quads  {backend:8s} {float(seconds):6.2f} s")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    active = importlib.import_module("mpxa.kernels").BACKEND
    print(f"active backend: {active}; compiled extension {'found' if compiled else 'missing'}")
    bench_lu(args.repeat)
    bench_coalesce(args.repeat)
    bench_end_to_end()


if __name__ == "__main__":
    main()
