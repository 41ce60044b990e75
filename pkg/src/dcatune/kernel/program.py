"""Cone program containers and solve options/results.

A program is ``min 0.5 z'Pz + q'z  s.t.  b - Az in K`` with K an ordered
product of zero / nonnegative / second-order cone blocks.  Duals follow
the convention ``Pz + q + A'y = 0`` with ``y`` in the dual cone and
``<y, b - Az> = 0`` at optimality, so a row lowered from ``a'z <= beta``
reads its inequality multiplier directly off ``y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..errors import InvalidInputError
from .cones import ConeBlock

OPTIMAL = "optimal"
MAX_ITERS = "max-iters"
INFEASIBLE = "infeasible-detected"


def _to_csr(mat, shape_hint=None):
    if sp.issparse(mat):
        return mat.tocsr().astype(float)
    arr = np.atleast_2d(np.asarray(mat, dtype=float))
    return sp.csr_matrix(arr)


@dataclass(eq=False)
class ConeProgram:
    P: sp.csr_matrix
    q: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: tuple

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).ravel()
        n = self.q.size
        self.P = _to_csr(self.P) if self.P is not None else sp.csr_matrix((n, n))
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.A = _to_csr(self.A) if self.A is not None else sp.csr_matrix((0, n))
        self.cones = tuple(self.cones)
        if self.P.shape != (n, n):
            raise InvalidInputError("P must be n-by-n")
        if self.A.shape != (self.b.size, n):
            raise InvalidInputError("A shape disagrees with q/b")
        if sum(blk.dim for blk in self.cones) != self.b.size:
            raise InvalidInputError("cone dims must sum to the number of rows")

    @property
    def n(self):
        return self.q.size

    @property
    def m(self):
        return self.b.size

    def validate(self, rng=None, probes=8):
        """Cheap structural and PSD checks; raises on violation."""
        sym_gap = abs(self.P - self.P.T)
        if sym_gap.nnz and sym_gap.max() > 1e-10 * max(1.0, abs(self.P).max()):
            raise InvalidInputError("P is not symmetric")
        rng = rng or np.random.default_rng(0)
        for _ in range(probes):
            z = rng.standard_normal(self.n)
            if z @ (self.P @ z) < -1e-9 * (z @ z):
                raise InvalidInputError("P fails the positive-semidefinite probe")

    def objective(self, z):
        return 0.5 * float(z @ (self.P @ z)) + float(self.q @ z)


@dataclass(frozen=True)
class SolveOptions:
    """First-order kernel settings.

    Termination uses unscaled residuals: optimal once
    ``primal_residual <= eps_abs + eps_rel * max(|Az|_inf, |b - Az|_inf)``
    and ``dual_residual <= eps_abs + eps_rel * max(|Pz|_inf, |A'y|_inf, |q|_inf)``.
    """

    eps_abs: float = 1e-8
    eps_rel: float = 1e-6
    max_iters: int = 20000
    over_relaxation: float = 1.5
    rho: float = 0.1
    sigma: float = 1e-6
    adaptive_rho: bool = True
    check_every: int = 25
    adapt_every: int = 200
    scaling_iters: int = 10
    diverge_norm: float = 1e12

    def __post_init__(self):
        if self.eps_abs <= 0 or self.eps_rel <= 0:
            raise InvalidInputError("tolerances must be positive")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if not 1.0 < self.over_relaxation < 2.0:
            raise InvalidInputError("over_relaxation must lie in (1, 2)")
        if self.rho <= 0 or self.sigma <= 0:
            raise InvalidInputError("rho and sigma must be positive")


@dataclass
class SolveResult:
    z: np.ndarray
    y: np.ndarray
    slack: np.ndarray
    status: str
    primal_residual: float
    dual_residual: float
    iterations: int
    objective: float

    @property
    def ok(self):
        return self.status == OPTIMAL
