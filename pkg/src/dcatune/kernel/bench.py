"""Backend benchmark: compiled loop vs numpy loop on representative
programs.  Run as ``python -m dcatune.kernel.bench``.
"""

from __future__ import annotations

import time

import numpy as np

from . import backend
from .program import ConeProgram, SolveOptions
from .solver import KernelSolver


def _make_program(rng, n_vars, n_rows, n_soc=2, soc_dim=5):
    B = rng.normal(size=(n_vars, n_vars)) / np.sqrt(n_vars)
    P = B.T @ B
    q = rng.normal(size=n_vars)
    m_lin = n_rows - n_soc * soc_dim
    A = rng.normal(size=(n_rows, n_vars)) / np.sqrt(n_vars)
    b = rng.normal(size=n_rows) + 1.0
    from .cones import ConeBlock

    cones = [ConeBlock("nonneg", m_lin)] + [ConeBlock("soc", soc_dim)] * n_soc
    return ConeProgram(P=P, q=q, A=A, b=b, cones=tuple(cones))


def _time_backend(name, prog, opts, repeats=3):
    loop = backend.get_run_chunk(name)
    best = np.inf
    result = None
    for _ in range(repeats):
        solver = KernelSolver(loop=loop)
        t0 = time.perf_counter()
        result = solver.solve(prog, options=opts)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    rng = np.random.default_rng(3)
    sizes = [(60, 120), (300, 500), (900, 1400)]
    opts = SolveOptions(eps_abs=1e-7, eps_rel=1e-7, max_iters=4000, adaptive_rho=False)
    print(f"compiled kernel available: {backend.HAVE_COMPILED} (active: {backend.ACTIVE})")
    header = f"{'n':>5} {'m':>5} {'iters':>6} {'numpy':>10} {'compiled':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for n_vars, n_rows in sizes:
        prog = _make_program(rng, n_vars, n_rows)
        t_py, r_py = _time_backend("python", prog, opts)
        if backend.HAVE_COMPILED:
            t_cy, r_cy = _time_backend("compiled", prog, opts)
            assert r_cy.iterations == r_py.iterations, "backends disagree on iterations"
            gap = np.max(np.abs(r_cy.z - r_py.z))
            assert gap < 1e-9, f"backends disagree on the solution ({gap:.2e})"
            print(
                f"{n_vars:>5} {n_rows:>5} {r_py.iterations:>6} {t_py:>9.4f}s "
                f"{t_cy:>9.4f}s {t_py / t_cy:>7.2f}x"
            )
        else:
            print(f"{n_vars:>5} {n_rows:>5} {r_py.iterations:>6} {t_py:>9.4f}s {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
