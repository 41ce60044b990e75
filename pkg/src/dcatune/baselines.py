"""Search baselines over log-scaled penalty weights.

Each candidate solves the classically penalized training problem and is
scored by the upper-level loss.  Candidates along a search path are
warm-started from the previous solution (a speed device only: starting
points never change the convex solves' answers).
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import InvalidInputError, SolverFailureError
from .kernel import KernelSolver, SolveOptions
from .lower_level import solve_penalized

__all__ = ["SearchEval", "SearchResult", "grid_search", "random_search"]

# SCS-grade accuracy is plenty for scoring search candidates
_SEARCH_OPTIONS = SolveOptions(eps_abs=1e-6, eps_rel=1e-5)


@dataclass
class SearchEval:
    exponents: np.ndarray
    lam: np.ndarray
    u: Optional[np.ndarray]
    ul_value: float
    failed: bool = False


@dataclass
class SearchResult:
    best: SearchEval
    x_best: np.ndarray
    evaluations: List[SearchEval] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def n_failed(self):
        return sum(e.failed for e in self.evaluations)


def _evaluate_candidates(spec, hyper_map, candidates, options):
    opts = options or _SEARCH_OPTIONS
    solver = KernelSolver()
    warm = None
    evals: List[SearchEval] = []
    best = None
    x_best = None
    t0 = time.perf_counter()
    for exps in candidates:
        lam, u = hyper_map.decode(np.asarray(exps, dtype=float))
        try:
            x, _, res = solve_penalized(spec, lam, u, solver=solver, options=opts, warm_start=warm)
            warm = (res.z, res.y)
            point = spec.full_point(x, u if spec.general_mode else None)
            ev = SearchEval(
                exponents=np.asarray(exps, dtype=float),
                lam=lam,
                u=u,
                ul_value=float(spec.ul_loss.value(point)),
            )
            cand_x = x
        except SolverFailureError:
            ev = SearchEval(
                exponents=np.asarray(exps, dtype=float),
                lam=lam,
                u=u,
                ul_value=float("inf"),
                failed=True,
            )
            cand_x = None
        evals.append(ev)
        # first-found tie-break: strict improvement only
        if not ev.failed and (best is None or ev.ul_value < best.ul_value):
            best = ev
            x_best = cand_x
    if best is None:
        raise SolverFailureError("every search candidate failed")
    return SearchResult(
        best=best, x_best=x_best, evaluations=evals, wall_time=time.perf_counter() - t0
    )


def grid_search(spec, hyper_map, grid_points=10, options=None):
    """Uniform grid in exponent space, lexicographic order (axis 0
    outermost); ties keep the first-found node."""
    if grid_points < 2:
        raise InvalidInputError("grid needs at least two points per axis")
    axes = [np.linspace(lo, hi, grid_points) for lo, hi in hyper_map.log_ranges]
    return _evaluate_candidates(spec, hyper_map, itertools.product(*axes), options)


def random_search(spec, hyper_map, samples=100, seed=0, options=None):
    """Uniform samples in exponent space; deterministic under ``seed``."""
    if samples < 1:
        raise InvalidInputError("need at least one sample")
    rng = np.random.default_rng(seed)
    ranges = np.asarray(hyper_map.log_ranges, dtype=float)
    draws = rng.uniform(ranges[:, 0], ranges[:, 1], size=(samples, ranges.shape[0]))
    return _evaluate_candidates(spec, hyper_map, draws, options)
