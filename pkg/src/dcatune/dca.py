"""Outer loop: penalized DC iterations on the decoupled bilevel program.

Each step solves the training problem at the current budgets (getting
the value and a multiplier), then one strongly convex proximal
subproblem in which the concave value-function part is linearized, then
applies the stopping test ``max(step length, feasibility) < tol`` and
the adaptive penalty update

    alpha <- alpha + delta_alpha   iff   max(alpha, 1/t) < c_alpha / step

with ``1/t`` read as +inf at feasible iterates, so the penalty weight
never grows once the linearized rows are satisfied.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .errors import SolverFailureError, StateError
from .kernel import KernelSolver, SolveOptions
from .kernel.program import INFEASIBLE, OPTIMAL
from .lowering import extract_duals, lower_subproblem, subproblem_warm_vector
from .lower_level import solve_ll
from .pieces import (
    BilevelSpec,
    Iterate,
    constraint_values,
    feasibility_gap,
    linearized_gap,
    penalty_vector,
)

__all__ = [
    "AlgoOptions",
    "TraceRecord",
    "Trace",
    "RunState",
    "initial_iterate",
    "step",
    "run",
    "kkt_report",
    "KKTReport",
    "decrease_violations",
]

_SQRT2_OVER_2 = math.sqrt(2.0) / 2.0


@dataclass(frozen=True)
class AlgoOptions:
    """Outer-loop settings.

    ``rho`` is the proximal weight of the subproblem (kept small so the
    subproblem stays close to the penalized objective while remaining
    strongly convex); ``eps_floor``/``eps_cap`` clamp the per-step inner
    tolerance ``min(cap, (sqrt(2)/2) * rho * step_prev)``.
    """

    rho: float = 1e-2
    alpha0: float = 1.0
    c_alpha: float = 1.0
    delta_alpha: float = 5.0
    tol: float = 0.1
    max_outer_iters: int = 200
    scaled_stopping: bool = True
    eps_floor: float = 1e-8
    eps_cap: float = 1e-6
    # inner defaults tuned for the re-solve pattern: step sizes carry
    # over between the structurally identical programs of consecutive
    # outer iterations, so the adapted values keep paying off
    ll_options: SolveOptions = field(
        default_factory=lambda: SolveOptions(rho=1.0, over_relaxation=1.7, max_iters=100000)
    )
    sub_options: SolveOptions = field(
        default_factory=lambda: SolveOptions(
            rho=10.0, over_relaxation=1.7, scaling_iters=6, max_iters=40000
        )
    )

    def __post_init__(self):
        for name in ("rho", "alpha0", "c_alpha", "delta_alpha", "tol", "eps_floor", "eps_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")


@dataclass
class TraceRecord:
    k: int
    delta: float
    delta_scaled: float
    t: float
    alpha: float
    phi_next: float
    phi_curr: float
    ll_value: float
    wall_time: float
    inner_iters_ll: int
    inner_iters_sub: int
    inner_certificate: float
    sub_status: str
    eta: float
    lam: np.ndarray


@dataclass
class Trace:
    records: List[TraceRecord] = field(default_factory=list)
    reason: str = "max-iters"

    def column(self, name):
        return np.array([getattr(rec, name) for rec in self.records])

    @property
    def iterations(self):
        return len(self.records)


@dataclass
class RunState:
    """Per-run mutable state: solver caches, warm starts, previous step."""

    ll_solver: KernelSolver = field(default_factory=KernelSolver)
    sub_solver: KernelSolver = field(default_factory=KernelSolver)
    ll_warm: Optional[tuple] = None
    sub_warm: Optional[tuple] = None
    delta_prev: Optional[float] = None
    k: int = 0


def initial_iterate(spec, r0, x0=None, u0=None, alpha0=1.0):
    x0 = np.zeros(spec.x_dim) if x0 is None else np.asarray(x0, dtype=float)
    if spec.general_mode:
        u0 = spec.u_lower.copy() if u0 is None else np.asarray(u0, dtype=float)
    else:
        u0 = np.zeros(0)
    return Iterate(x=x0, r=np.asarray(r0, dtype=float), u=u0, alpha=alpha0)


def _ul_value(spec, x, u):
    return float(spec.ul_loss.value(spec.full_point(x, u if spec.general_mode else None)))


def _max_term_at_center(spec, ann):
    """max(0, V_k(z_k), P_i(x_k) - r_k_i, g_i(x_k, u_k)) with V_k(z_k) =
    l(x_k) - v(r_k)."""
    u = ann.u if spec.general_mode else None
    terms = [0.0, spec.ll_loss.value(spec.full_point(ann.x, u)) - ann.ll_value]
    terms.extend(penalty_vector(spec, ann.x, u) - ann.r)
    if spec.n_constraints:
        terms.extend(constraint_values(spec, ann.x, u))
    return float(max(terms))


def step(spec, prev, options=None, state=None):
    """One outer iteration from ``prev``; returns (next iterate, record).

    The returned iterate carries the updated penalty weight but no
    training multipliers (its own step will annotate them).
    """
    opt = options or AlgoOptions()
    st = state or RunState()
    t0 = time.perf_counter()
    u_arg = prev.u if spec.general_mode else None

    try:
        ll = solve_ll(
            spec, prev.r, u_arg, solver=st.ll_solver, options=opt.ll_options, warm_start=st.ll_warm
        )
    except SolverFailureError as exc:
        raise SolverFailureError(f"outer iteration {st.k}: {exc}") from exc
    st.ll_warm = (ll.inner.z, ll.inner.y)
    ann = prev.with_ll_data(gamma=ll.gamma, ll_value=ll.value, zeta=ll.zeta, xi=ll.xi)

    if st.delta_prev is None:
        eps_k = opt.eps_cap
    else:
        eps_k = min(opt.eps_cap, _SQRT2_OVER_2 * opt.rho * st.delta_prev)
    eps_k = max(eps_k, opt.eps_floor)
    sub_opt = replace(opt.sub_options, eps_abs=eps_k, eps_rel=eps_k)

    prog, rmap = lower_subproblem(spec, ann, prev.alpha, opt.rho)
    warm = st.sub_warm
    if warm is None:
        warm = (subproblem_warm_vector(rmap, spec, ann, _max_term_at_center(spec, ann)), None)
    res = st.sub_solver.solve(prog, options=sub_opt, warm_start=warm)
    if res.status == INFEASIBLE:
        raise SolverFailureError(
            f"outer iteration {st.k}: subproblem diverged after {res.iterations} iterations"
        )
    st.sub_warm = (res.z, res.y)
    duals = extract_duals(res, rmap) if res.status == OPTIMAL else None

    x1 = res.z[rmap.x]
    u1 = res.z[rmap.u] if spec.general_mode else np.zeros(0)
    r1 = np.clip(res.z[rmap.r], 0.0, None)
    nxt = Iterate(x=x1, r=r1, u=u1, alpha=prev.alpha)

    t_next = feasibility_gap(spec, nxt, ann)
    dz = nxt.z() - prev.z()
    delta = float(np.linalg.norm(dz))
    delta_scaled = delta / math.sqrt(1.0 + float(prev.z() @ prev.z()))

    phi_next = _ul_value(spec, x1, u1) + 0.5 * opt.rho * delta**2 + prev.alpha * t_next
    phi_curr = _ul_value(spec, prev.x, prev.u) + prev.alpha * _max_term_at_center(spec, ann)

    inv_t = math.inf if t_next == 0.0 else 1.0 / t_next
    threshold = math.inf if delta == 0.0 else opt.c_alpha / delta
    if max(prev.alpha, inv_t) < threshold:
        alpha_next = prev.alpha + opt.delta_alpha
    else:
        alpha_next = prev.alpha

    rec = TraceRecord(
        k=st.k,
        delta=delta,
        delta_scaled=delta_scaled,
        t=t_next,
        alpha=prev.alpha,
        phi_next=phi_next,
        phi_curr=phi_curr,
        ll_value=ll.value,
        wall_time=time.perf_counter() - t0,
        inner_iters_ll=ll.inner.iterations,
        inner_iters_sub=res.iterations,
        inner_certificate=res.dual_residual,
        sub_status=res.status,
        eta=duals.eta if duals is not None else math.nan,
        lam=duals.gamma if duals is not None else np.full(spec.n_levels, math.nan),
    )
    st.delta_prev = delta
    st.k += 1
    return replace(nxt, alpha=alpha_next), rec


def run(spec, init, options=None, state=None, annotate_final=True):
    """Iterate ``step`` until the stopping test fires or the budget runs out.

    Returns (final iterate, trace).  Hitting the outer iteration budget
    is recorded in ``trace.reason``, not raised.
    """
    opt = options or AlgoOptions()
    st = state or RunState()
    trace = Trace()
    cur = init
    for _ in range(opt.max_outer_iters):
        cur, rec = step(spec, cur, opt, st)
        trace.records.append(rec)
        metric = rec.delta_scaled if opt.scaled_stopping else rec.delta
        if max(metric, rec.t) < opt.tol:
            trace.reason = "converged"
            break
    if annotate_final:
        u_arg = cur.u if spec.general_mode else None
        ll = solve_ll(spec, cur.r, u_arg, solver=st.ll_solver, options=opt.ll_options, warm_start=st.ll_warm)
        cur = cur.with_ll_data(gamma=ll.gamma, ll_value=ll.value, zeta=ll.zeta, xi=ll.xi)
    return cur, trace


@dataclass
class KKTReport:
    """Residuals of the stationarity system at a point.

    ``feasibility`` is the exact single-level feasibility measure
    ``max(0, l - v(r), P_i - r_i, g_i)``; ``complementarity`` is
    ``max_i |lam_i (P_i - r_i)|`` with the subproblem duals as
    multipliers; ``stationarity`` is the upper bound
    ``rho * ||z* - z|| + inner dual residual`` from one proximal
    subproblem solve centered at the point (its minimizer ``z*`` moves
    nowhere exactly when the point is stationary for the penalized
    model).
    """

    feasibility: float
    complementarity: float
    stationarity: float
    eta: float
    lam: np.ndarray

    def max_residual(self):
        return max(self.feasibility, self.complementarity, self.stationarity)


def kkt_report(spec, final, options=None, report_options=None):
    """Assemble KKT residuals at ``final`` (annotating it if needed)."""
    opt = options or AlgoOptions()
    if final.gamma is None or final.ll_value is None:
        u_arg = final.u if spec.general_mode else None
        ll = solve_ll(spec, final.r, u_arg, options=opt.ll_options)
        final = final.with_ll_data(gamma=ll.gamma, ll_value=ll.value, zeta=ll.zeta, xi=ll.xi)
    sopt = report_options or replace(
        opt.sub_options, eps_abs=1e-9, eps_rel=1e-9, max_iters=max(opt.sub_options.max_iters, 50000)
    )
    prog, rmap = lower_subproblem(spec, final, final.alpha, opt.rho)
    res = KernelSolver().solve(prog, options=sopt)
    if res.status != OPTIMAL:
        raise SolverFailureError(f"stationarity probe did not converge: {res.status}")
    duals = extract_duals(res, rmap)
    z_star = np.concatenate(
        [res.z[rmap.x], res.z[rmap.u] if spec.general_mode else np.zeros(0), res.z[rmap.r]]
    )
    move = float(np.linalg.norm(z_star - final.z()))
    u_arg = final.u if spec.general_mode else None
    gaps = penalty_vector(spec, final.x, u_arg) - final.r
    feas = feasibility_gap(spec, final, final)
    comp = float(np.max(np.abs(duals.gamma * gaps))) if gaps.size else 0.0
    return KKTReport(
        feasibility=feas,
        complementarity=comp,
        stationarity=opt.rho * move + res.dual_residual,
        eta=duals.eta,
        lam=duals.gamma,
    )


def decrease_violations(trace, rho, slack=1e-6):
    """Indices k where the per-iteration decrease bound
    ``phi_k(z_{k+1}) <= phi_k(z_k) + (rho/4) ||z_k - z_{k-1}||^2 + slack``
    fails (empty on a healthy run)."""
    bad = []
    prev_delta = 0.0
    for rec in trace.records:
        bound = rec.phi_curr + 0.25 * rho * prev_delta**2 + slack
        if rec.phi_next > bound:
            bad.append(rec.k)
        prev_delta = rec.delta
    return bad
