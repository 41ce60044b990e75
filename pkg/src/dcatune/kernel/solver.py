"""ADMM driver: scaling, cached factorization, chunked iteration.

The driver owns everything that happens once per program structure
(equilibration, forming and inverting ``M = P + sigma*I + A' R A``) and
delegates the per-iteration work to a loop backend.  Re-solving a
program whose (P, A, cones) are unchanged reuses the cached inverse, so
warm-started re-solves with new (q, b) pay no factorization cost; the
cache is rebuilt when the matrices or the step-size vector change.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack

from ..errors import InvalidInputError, SolverFailureError
from . import backend
from ._loop_py import CONVERGED, DIVERGED, RUNNING, _project_shifted
from .cones import cone_codes
from .program import INFEASIBLE, MAX_ITERS, OPTIMAL, ConeProgram, SolveOptions, SolveResult
from .scaling import ruiz_equilibrate

_RHO_EQ_FACTOR = 1e3
_RHO_MIN = 1e-6
_RHO_MAX = 1e3
_MAX_REFACTOR = 30


@dataclass
class _Workspace:
    n: int
    m: int
    Minv: np.ndarray
    P: sp.csr_matrix
    A: sp.csr_matrix
    At: sp.csr_matrix
    qs: np.ndarray
    bs: np.ndarray
    kinds: np.ndarray
    starts: np.ndarray
    rho: np.ndarray
    rho_inv: np.ndarray
    sigma: float
    relax: float
    dinv: np.ndarray
    einv: np.ndarray
    cinv: float
    x: np.ndarray
    w: np.ndarray
    y: np.ndarray
    eps_abs: float
    eps_rel: float
    check_every: int
    diverge_norm: float
    stats: np.ndarray = field(default_factory=lambda: np.zeros(4))
    iters_done: int = 0


@dataclass
class _Factorization:
    P: sp.csr_matrix
    A: sp.csr_matrix
    cones: tuple
    d: np.ndarray
    e: np.ndarray
    c: float
    Ps: sp.csr_matrix
    As: sp.csr_matrix
    Ast: sp.csr_matrix
    kinds: np.ndarray
    starts: np.ndarray
    sigma: float
    base_rho: float
    rho_vec: np.ndarray
    Minv: np.ndarray


def _invert_spd(M):
    Mf, info = lapack.dpotrf(M, lower=1, overwrite_a=1)
    if info != 0:
        raise SolverFailureError(
            f"Cholesky factorization broke down (dpotrf info={info}); "
            "the quadratic cost may be indefinite or badly conditioned"
        )
    Minv, info = lapack.dpotri(Mf, lower=1)
    if info != 0:
        raise SolverFailureError(f"triangular inversion failed (dpotri info={info})")
    Minv = np.tril(Minv)
    return Minv + np.tril(Minv, -1).T


def _rho_vector(base, kinds, starts, m):
    rho = np.full(m, base)
    for i in range(kinds.size):
        if kinds[i] == 0:
            rho[starts[i] : starts[i + 1]] = min(base * _RHO_EQ_FACTOR, _RHO_MAX * 1e3)
    return rho


def _same_structure(fact, prog):
    if fact is None:
        return False
    if fact.cones != prog.cones:
        return False
    for old, new in ((fact.P, prog.P), (fact.A, prog.A)):
        if old.shape != new.shape or old.nnz != new.nnz:
            return False
        if not (
            np.array_equal(old.indptr, new.indptr)
            and np.array_equal(old.indices, new.indices)
            and np.array_equal(old.data, new.data)
        ):
            return False
    return True


class KernelSolver:
    """Stateful solver: one instance caches one program structure.

    Instances are single-threaded; use one per thread.  Programs and
    results are plain values and can be shared freely.
    """

    def __init__(self, loop=None):
        self._fact: Optional[_Factorization] = None
        self._loop = loop if loop is not None else backend.run_chunk

    def _build_factorization(self, prog, opt):
        prog.validate()
        d, e, c, Ps, As = ruiz_equilibrate(prog.P, prog.A, prog.cones, opt.scaling_iters)
        kinds, starts = cone_codes(prog.cones)
        # carry the adapted step size over from the previous structure:
        # successive programs from one outer loop are near-identical, so
        # the tuned rho usually survives and saves refactorizations
        base_rho = self._fact.base_rho if self._fact is not None else opt.rho
        fact = _Factorization(
            P=prog.P,
            A=prog.A,
            cones=prog.cones,
            d=d,
            e=e,
            c=c,
            Ps=Ps,
            As=As,
            Ast=As.T.tocsr(),
            kinds=kinds,
            starts=starts,
            sigma=opt.sigma,
            base_rho=base_rho,
            rho_vec=_rho_vector(base_rho, kinds, starts, prog.m),
            Minv=np.empty(0),
        )
        self._refactor(fact)
        return fact

    def _refactor(self, fact):
        n = fact.Ps.shape[0]
        M = fact.Ps + fact.sigma * sp.identity(n, format="csr")
        if fact.As.shape[0]:
            M = M + fact.Ast @ sp.diags(fact.rho_vec) @ fact.As
        fact.Minv = _invert_spd(np.ascontiguousarray(M.toarray()))

    def _set_rho(self, fact, base):
        fact.base_rho = base
        fact.rho_vec = _rho_vector(base, fact.kinds, fact.starts, fact.As.shape[0])
        self._refactor(fact)

    def solve(self, prog, options=None, warm_start=None):
        """Solve a cone program, optionally warm-started from ``(z, y)``.

        Warm starts never change the answer, only the iteration count.
        """
        opt = options or SolveOptions()
        if not isinstance(prog, ConeProgram):
            raise InvalidInputError("solve expects a ConeProgram")
        if self._fact is not None and self._fact.sigma != opt.sigma:
            self._fact = None
        if not _same_structure(self._fact, prog):
            self._fact = self._build_factorization(prog, opt)
        fact = self._fact
        n, m = prog.n, prog.m

        qs = fact.c * (fact.d * prog.q)
        if m == 0:
            return self._solve_unconstrained(prog, fact, qs, opt, warm_start)
        bs = fact.e * prog.b

        x = np.zeros(n)
        y = np.zeros(m)
        if warm_start is not None:
            z0, y0 = warm_start
            if z0 is not None:
                x = np.asarray(z0, dtype=float) / fact.d
            if y0 is not None:
                y = fact.c * np.asarray(y0, dtype=float) / fact.e
        ws = _Workspace(
            n=n,
            m=m,
            Minv=fact.Minv,
            P=fact.Ps,
            A=fact.As,
            At=fact.Ast,
            qs=qs,
            bs=bs,
            kinds=fact.kinds,
            starts=fact.starts,
            rho=fact.rho_vec,
            rho_inv=1.0 / fact.rho_vec,
            sigma=fact.sigma,
            relax=opt.over_relaxation,
            dinv=1.0 / fact.d,
            einv=1.0 / fact.e,
            cinv=1.0 / fact.c,
            x=x,
            w=np.empty(m),
            y=y,
            eps_abs=opt.eps_abs,
            eps_rel=opt.eps_rel,
            check_every=opt.check_every,
            diverge_norm=opt.diverge_norm,
        )
        ws.w = _project_shifted(ws, fact.As @ x)

        total = 0
        refactors = 0
        code = RUNNING
        while total < opt.max_iters:
            chunk = min(opt.adapt_every, opt.max_iters - total)
            code = self._loop(ws, chunk)
            total += ws.iters_done
            if code != RUNNING:
                break
            if opt.adaptive_rho and refactors < _MAX_REFACTOR and total < opt.max_iters:
                r_p, r_d, s_p, s_d = ws.stats
                ratio = (r_p / max(s_p, 1e-12)) / max(r_d / max(s_d, 1e-12), 1e-12)
                new_base = float(np.clip(fact.base_rho * np.sqrt(ratio), _RHO_MIN, _RHO_MAX))
                if new_base >= 5.0 * fact.base_rho or new_base <= fact.base_rho / 5.0:
                    self._set_rho(fact, new_base)
                    ws.Minv = fact.Minv
                    ws.rho = fact.rho_vec
                    ws.rho_inv = 1.0 / fact.rho_vec
                    refactors += 1

        z = fact.d * ws.x
        y_orig = fact.e * ws.y / fact.c
        w_orig = ws.w / fact.e
        slack = prog.b - w_orig
        r_p = float(np.max(np.abs(prog.A @ z - w_orig), initial=0.0))
        r_d = float(np.max(np.abs(prog.P @ z + prog.q + prog.A.T @ y_orig)))
        if code == CONVERGED:
            status = OPTIMAL
        elif code == DIVERGED:
            status = INFEASIBLE
        else:
            status = MAX_ITERS
        return SolveResult(
            z=z,
            y=y_orig,
            slack=slack,
            status=status,
            primal_residual=r_p,
            dual_residual=r_d,
            iterations=total,
            objective=prog.objective(z),
        )

    def _solve_unconstrained(self, prog, fact, qs, opt, warm_start):
        x = np.zeros(prog.n)
        if warm_start is not None and warm_start[0] is not None:
            x = np.asarray(warm_start[0], dtype=float) / fact.d
        status = MAX_ITERS
        it = 0
        r_d = np.inf
        for it in range(1, opt.max_iters + 1):
            x = fact.Minv @ (fact.sigma * x - qs)
            z = fact.d * x
            gvec = prog.P @ z + prog.q
            r_d = float(np.max(np.abs(gvec)))
            s_d = float(
                max(
                    np.max(np.abs(prog.P @ z), initial=0.0),
                    np.max(np.abs(prog.q), initial=0.0),
                )
            )
            if r_d <= opt.eps_abs + opt.eps_rel * s_d:
                status = OPTIMAL
                break
            if not np.isfinite(r_d) or np.max(np.abs(x)) > opt.diverge_norm:
                status = INFEASIBLE
                break
        z = fact.d * x
        return SolveResult(
            z=z,
            y=np.zeros(0),
            slack=np.zeros(0),
            status=status,
            primal_residual=0.0,
            dual_residual=r_d,
            iterations=it,
            objective=prog.objective(z),
        )


def solve(prog, options=None, warm_start=None, solver=None):
    """One-shot solve with a throwaway (or supplied) solver instance."""
    s = solver or KernelSolver()
    return s.solve(prog, options=options, warm_start=warm_start)
