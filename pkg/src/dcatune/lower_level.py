"""Value-function oracle for the training problem.

``solve_ll`` returns the optimal training loss ``v(r[, u])`` together
with a minimizer and its multipliers; ``-gamma`` is a subgradient of
``v(.)`` in ``r`` (an element of the subdifferential; equality with the
full multiplier set needs strict feasibility, which holds away from
``r_i = 0``).  In general mode a deterministic subgradient ``xi`` of
``v`` in ``u`` is assembled from the same multipliers by the chain rule,
using each piece's specific subgradient selection (sign vector for l1,
gradient for smooth pieces).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BoundaryProbeError, InvalidInputError, SolverFailureError
from .kernel import KernelSolver, SolveOptions
from .kernel.program import OPTIMAL
from .lowering import extract_duals, lower_lower_level, lower_penalized
from .pieces import BilevelSpec

__all__ = ["LLSolution", "solve_ll", "solve_penalized", "value_function_probe"]


@dataclass
class LLSolution:
    """Training-problem solution at fixed budgets.

    Attributes
    ----------
    x_tilde : minimizer of the training loss on the budget set
    value : optimal training loss v(r[, u])
    gamma : budget multipliers (J,), nonnegative
    zeta : constraint multipliers (m,), nonnegative
    xi : selected subgradient of v in u (general mode only)
    inner : the kernel's solve report
    """

    x_tilde: np.ndarray
    value: float
    gamma: np.ndarray
    zeta: np.ndarray
    xi: Optional[np.ndarray]
    inner: object


def _full_point(spec, x, u):
    return spec.full_point(x, u if spec.general_mode else None)


def solve_ll(spec, r, u=None, solver=None, options=None, warm_start=None):
    """Solve the training problem at budgets ``r`` (and fixed ``u``).

    Passing a shared ``solver`` keeps the factorization cache warm
    across calls with the same structure; ``warm_start`` is the previous
    ``(z, y)`` pair of the *lowered* program.
    """
    prog, rmap = lower_lower_level(spec, r, u)
    s = solver or KernelSolver()
    res = s.solve(prog, options=options, warm_start=warm_start)
    if res.status != OPTIMAL:
        raise SolverFailureError(
            f"training solve failed at r={np.asarray(r)!r}"
            + (f", u given" if spec.general_mode else "")
            + f": status {res.status}, {res.iterations} iterations"
        )
    x = res.z[rmap.x]
    duals = extract_duals(res, rmap)
    value = float(spec.ll_loss.value(_full_point(spec, x, u)))
    xi = None
    if spec.general_mode:
        xi = _select_xi(spec, x, u, duals)
    return LLSolution(
        x_tilde=x, value=value, gamma=duals.gamma, zeta=duals.zeta, xi=xi, inner=res
    )


def _select_xi(spec, x, u, duals):
    """Chain-rule subgradient of v in u from the training multipliers."""
    v = spec.full_point(x, u)
    usl = slice(spec.x_dim, spec.x_dim + spec.u_dim)
    xi = spec.ll_loss.subgrad(v)[usl]
    for piece, mu in zip(spec.penalties, duals.piece_gammas):
        if mu != 0.0:
            xi = xi + mu * piece.subgrad(v)[usl]
    for g, z in zip(spec.ll_constraints, duals.zeta):
        if z != 0.0:
            xi = xi + z * g.subgrad(v)[usl]
    return xi


def solve_penalized(spec, lam, u=None, solver=None, options=None, warm_start=None):
    """Solve the classically penalized training problem at weights ``lam``.

    Returns (x, objective value, kernel report).
    """
    prog, rmap = lower_penalized(spec, lam, u)
    s = solver or KernelSolver()
    res = s.solve(prog, options=options, warm_start=warm_start)
    if res.status != OPTIMAL:
        raise SolverFailureError(
            f"penalized solve failed at lam={np.asarray(lam)!r}: status {res.status}"
        )
    x = res.z[rmap.x]
    point = _full_point(spec, x, u)
    lam = np.asarray(lam, dtype=float)
    value = float(spec.ll_loss.value(point))
    for piece, level in zip(spec.penalties, spec.penalty_levels):
        value += float(lam[level]) * piece.value(point)
    return x, value, res


def value_function_probe(spec, r, directions, h, u=None, solver=None, options=None):
    """One-sided difference quotients ``(v(r + h d) - v(r)) / h``.

    Validation utility for the subgradient property.  Requires ``r > 0``
    componentwise: the value function need not be Lipschitz on the
    boundary, so probes there are refused.
    """
    r = np.asarray(r, dtype=float)
    if h <= 0:
        raise InvalidInputError("probe step h must be positive")
    if np.any(r <= 0):
        raise BoundaryProbeError(
            "value-function probe needs r > 0 componentwise; "
            f"got min(r) = {r.min():g}"
        )
    s = solver or KernelSolver()
    base = solve_ll(spec, r, u, solver=s, options=options)
    slopes = []
    for d in np.atleast_2d(np.asarray(directions, dtype=float)):
        shifted = solve_ll(spec, r + h * d, u, solver=s, options=options)
        slopes.append((shifted.value - base.value) / h)
    return np.array(slopes)
