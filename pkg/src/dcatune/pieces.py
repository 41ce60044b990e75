"""Structured convex pieces and bilevel problem descriptions.

A bilevel tuning problem is described by convex "pieces": closed-world
building blocks (quadratic losses, norms, hinge sums, affine maps) that
every other module can pattern-match on.  The upper level minimizes a
validation loss ``L(x[, u])`` subject to ``x`` solving the training
problem ``min l(x) s.t. P_i(x) <= r_i`` (plus optional constraints
``g(x, u) <= 0`` and a box on the extra upper-level block ``u``).

Pieces evaluate on the concatenated decision vector ``(x, u)``; when
``u_dim == 0`` that is just ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InvalidInputError, StateError

__all__ = [
    "QuadLoss",
    "L1Norm",
    "L2Norm",
    "SquaredL2",
    "HingeSum",
    "Affine",
    "BoxGap",
    "ConvexPiece",
    "BilevelSpec",
    "Iterate",
    "eval_piece",
    "penalty_vector",
    "constraint_values",
    "feasibility_gap",
]


def _as_vector(x, name="vector"):
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {v.shape}")
    return v


def _as_index_block(block):
    idx = np.asarray(block, dtype=int)
    if idx.ndim != 1 or idx.size == 0:
        raise InvalidInputError("index block must be a nonempty 1-d integer array")
    return idx


@dataclass(frozen=True, eq=False)
class QuadLoss:
    """``scale * 0.5 * ||A v - b||^2`` on the ambient vector ``v``."""

    A: np.ndarray
    b: np.ndarray
    scale: float = 1.0
    nonneg = True

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = _as_vector(self.b, "target")
        if A.shape[0] != b.size:
            raise InvalidInputError("design matrix and target length disagree")
        if self.scale <= 0:
            raise InvalidInputError("scale must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self):
        return self.A.shape[1]

    def value(self, v):
        res = self.A @ v - self.b
        return 0.5 * self.scale * float(res @ res)

    def subgrad(self, v):
        return self.scale * (self.A.T @ (self.A @ v - self.b))


@dataclass(frozen=True, eq=False)
class L1Norm:
    """``||v[block]||_1``."""

    dim: int
    block: np.ndarray
    nonneg = True

    def __post_init__(self):
        object.__setattr__(self, "block", _as_index_block(self.block))
        if self.block.max() >= self.dim or self.block.min() < 0:
            raise InvalidInputError("index block out of range")

    def value(self, v):
        return float(np.abs(v[self.block]).sum())

    def subgrad(self, v):
        g = np.zeros(self.dim)
        g[self.block] = np.sign(v[self.block])
        return g


@dataclass(frozen=True, eq=False)
class L2Norm:
    """``||v[block]||_2``."""

    dim: int
    block: np.ndarray
    nonneg = True

    def __post_init__(self):
        object.__setattr__(self, "block", _as_index_block(self.block))
        if self.block.max() >= self.dim or self.block.min() < 0:
            raise InvalidInputError("index block out of range")

    def value(self, v):
        return float(np.linalg.norm(v[self.block]))

    def subgrad(self, v):
        g = np.zeros(self.dim)
        nrm = np.linalg.norm(v[self.block])
        if nrm > 0:
            g[self.block] = v[self.block] / nrm
        return g


@dataclass(frozen=True, eq=False)
class SquaredL2:
    """``scale * ||v[block]||_2^2`` (``scale=0.5`` gives the usual ridge term)."""

    dim: int
    block: np.ndarray
    scale: float = 0.5
    nonneg = True

    def __post_init__(self):
        object.__setattr__(self, "block", _as_index_block(self.block))
        if self.block.max() >= self.dim or self.block.min() < 0:
            raise InvalidInputError("index block out of range")
        if self.scale <= 0:
            raise InvalidInputError("scale must be positive")

    def value(self, v):
        w = v[self.block]
        return self.scale * float(w @ w)

    def subgrad(self, v):
        g = np.zeros(self.dim)
        g[self.block] = 2.0 * self.scale * v[self.block]
        return g


@dataclass(frozen=True, eq=False)
class HingeSum:
    """Weighted hinge loss ``sum_j w_j * max(o_j - y_j * (A_j @ v), 0)``.

    ``A`` rows act on the ambient vector, so an intercept is encoded as an
    extra column with coefficient -1.  ``offsets`` default to 1 and
    ``weights`` to 1.
    """

    A: np.ndarray
    labels: np.ndarray
    offsets: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    nonneg = True

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        y = _as_vector(self.labels, "labels")
        if A.shape[0] != y.size:
            raise InvalidInputError("design matrix and labels length disagree")
        o = np.ones(y.size) if self.offsets is None else _as_vector(self.offsets)
        w = np.ones(y.size) if self.weights is None else _as_vector(self.weights)
        if o.size != y.size or w.size != y.size:
            raise InvalidInputError("offsets/weights length disagrees with samples")
        if np.any(w < 0):
            raise InvalidInputError("hinge weights must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "offsets", o)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.A.shape[1]

    def margins(self, v):
        return self.offsets - self.labels * (self.A @ v)

    def value(self, v):
        return float(self.weights @ np.maximum(self.margins(v), 0.0))

    def subgrad(self, v):
        active = (self.margins(v) > 0).astype(float)
        return -(self.weights * active * self.labels) @ self.A


@dataclass(frozen=True, eq=False)
class Affine:
    """``c @ v + d``.  May be negative, so usable as a constraint but not
    as a penalty."""

    coeffs: np.ndarray
    constant: float = 0.0
    nonneg = False

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _as_vector(self.coeffs, "coefficients"))

    @property
    def dim(self):
        return self.coeffs.size

    def value(self, v):
        return float(self.coeffs @ v + self.constant)

    def subgrad(self, v):
        return self.coeffs.copy()


@dataclass(frozen=True, eq=False)
class BoxGap:
    """Violation gap of box bounds on ``v[block]``:
    ``max_j max(lower_j - v_j, v_j - upper_j, 0)``."""

    dim: int
    block: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    nonneg = True

    def __post_init__(self):
        object.__setattr__(self, "block", _as_index_block(self.block))
        lo = _as_vector(self.lower, "lower")
        hi = _as_vector(self.upper, "upper")
        if lo.size != self.block.size or hi.size != self.block.size:
            raise InvalidInputError("bounds length disagrees with index block")
        if np.any(lo > hi):
            raise InvalidInputError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def _gaps(self, v):
        w = v[self.block]
        return np.maximum(np.maximum(self.lower - w, w - self.upper), 0.0)

    def value(self, v):
        return float(self._gaps(v).max())

    def subgrad(self, v):
        g = np.zeros(self.dim)
        gaps = self._gaps(v)
        j = int(np.argmax(gaps))
        if gaps[j] > 0:
            w = v[self.block][j]
            g[self.block[j]] = -1.0 if self.lower[j] - w >= w - self.upper[j] else 1.0
        return g


ConvexPiece = Union[QuadLoss, L1Norm, L2Norm, SquaredL2, HingeSum, Affine, BoxGap]

_PIECE_TYPES = (QuadLoss, L1Norm, L2Norm, SquaredL2, HingeSum, Affine, BoxGap)


def eval_piece(piece, point):
    """Evaluate a convex piece at ``point``.

    Raises
    ------
    InvalidInputError
        If the point dimension does not match the piece.
    """
    v = _as_vector(point, "point")
    if v.size != piece.dim:
        raise InvalidInputError(
            f"point has dimension {v.size}, piece expects {piece.dim}"
        )
    return piece.value(v)


@dataclass(frozen=True, eq=False)
class BilevelSpec:
    """Decoupled bilevel tuning instance.

    ``penalty_levels[i]`` is the index of the budget coordinate ``r_j``
    that bounds penalty piece ``i``; several pieces may share one level
    (the cross-validated SVM binds every fold's margin penalty to a
    single budget).  ``J = max(penalty_levels) + 1``.

    The training objective is assumed bounded below on every feasible
    set ``{P_i <= r_i, g <= 0}`` with ``r > 0``; this is a caller
    obligation and not verified here.
    """

    ul_loss: ConvexPiece
    ll_loss: ConvexPiece
    penalties: tuple
    x_dim: int
    u_dim: int = 0
    penalty_levels: Optional[tuple] = None
    ll_constraints: tuple = ()
    u_lower: Optional[np.ndarray] = None
    u_upper: Optional[np.ndarray] = None

    def __post_init__(self):
        penalties = tuple(self.penalties)
        if not penalties:
            raise InvalidInputError("at least one penalty piece is required")
        levels = self.penalty_levels
        if levels is None:
            levels = tuple(range(len(penalties)))
        levels = tuple(int(j) for j in levels)
        if len(levels) != len(penalties):
            raise InvalidInputError("penalty_levels length disagrees with penalties")
        n_levels = max(levels) + 1
        if sorted(set(levels)) != list(range(n_levels)):
            raise InvalidInputError("penalty_levels must cover 0..J-1")
        dim = self.x_dim + self.u_dim
        for p in penalties:
            if not isinstance(p, _PIECE_TYPES):
                raise InvalidInputError(f"unknown piece type {type(p).__name__}")
            if not p.nonneg:
                raise InvalidInputError(
                    f"{type(p).__name__} is not nonnegative-valued, cannot be a penalty"
                )
            if p.dim != dim:
                raise InvalidInputError("penalty piece dimension mismatch")
        for p in (self.ul_loss, self.ll_loss) + tuple(self.ll_constraints):
            if p.dim != dim:
                raise InvalidInputError("piece dimension disagrees with x_dim + u_dim")
        if self.u_dim > 0:
            if self.u_lower is None or self.u_upper is None:
                raise InvalidInputError("u block requires box bounds")
            lo = _as_vector(self.u_lower, "u_lower")
            hi = _as_vector(self.u_upper, "u_upper")
            if lo.size != self.u_dim or hi.size != self.u_dim:
                raise InvalidInputError("u bounds length disagrees with u_dim")
            if np.any(lo > hi):
                raise InvalidInputError("empty u box")
            object.__setattr__(self, "u_lower", lo)
            object.__setattr__(self, "u_upper", hi)
        object.__setattr__(self, "penalties", penalties)
        object.__setattr__(self, "penalty_levels", levels)
        object.__setattr__(self, "ll_constraints", tuple(self.ll_constraints))

    @property
    def n_levels(self):
        """Number of budget coordinates J."""
        return max(self.penalty_levels) + 1

    @property
    def n_constraints(self):
        return len(self.ll_constraints)

    @property
    def general_mode(self):
        return self.u_dim > 0

    def full_point(self, x, u=None):
        x = _as_vector(x, "x")
        if x.size != self.x_dim:
            raise InvalidInputError(f"x has dimension {x.size}, expected {self.x_dim}")
        if self.u_dim == 0:
            return x
        u = _as_vector(u if u is not None else np.zeros(0), "u")
        if u.size != self.u_dim:
            raise InvalidInputError(f"u has dimension {u.size}, expected {self.u_dim}")
        return np.concatenate([x, u])


def penalty_vector(spec, x, u=None):
    """Budget usage ``P(x) = (P_1, ..., P_J)``, all components >= 0.

    When several pieces share a level, the level's value is their max
    (the shared budget must cover every piece bound by it).
    """
    v = spec.full_point(x, u)
    out = np.zeros(spec.n_levels)
    seen = np.zeros(spec.n_levels, dtype=bool)
    for piece, j in zip(spec.penalties, spec.penalty_levels):
        val = piece.value(v)
        out[j] = val if not seen[j] else max(out[j], val)
        seen[j] = True
    return out


def constraint_values(spec, x, u=None):
    """Values ``g_i(x, u)`` of the lower-level constraint pieces."""
    v = spec.full_point(x, u)
    return np.array([g.value(v) for g in spec.ll_constraints])


@dataclass(frozen=True)
class Iterate:
    """Algorithm state ``z = (x, u, r)`` with penalty weight and cached
    lower-level data.

    ``gamma``/``zeta`` are the multipliers of the budget/constraint rows
    at the last lower-level solve, ``xi`` the selected subgradient of
    the value function in ``u``, and ``ll_value`` the optimal training
    loss ``v(r[, u])``.  They are absent until a step annotates them.
    """

    x: np.ndarray
    r: np.ndarray
    u: np.ndarray = field(default_factory=lambda: np.zeros(0))
    alpha: float = 1.0
    gamma: Optional[np.ndarray] = None
    zeta: Optional[np.ndarray] = None
    xi: Optional[np.ndarray] = None
    ll_value: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "x", _as_vector(self.x, "x"))
        object.__setattr__(self, "r", _as_vector(self.r, "r"))
        object.__setattr__(self, "u", _as_vector(self.u, "u"))
        if np.any(self.r < 0):
            raise InvalidInputError("budget vector r must be nonnegative")
        if self.alpha <= 0:
            raise InvalidInputError("penalty weight alpha must be positive")
        if self.gamma is not None:
            g = _as_vector(self.gamma, "gamma")
            if np.any(g < 0):
                raise InvalidInputError("gamma must be nonnegative")
            object.__setattr__(self, "gamma", g)
        if self.zeta is not None:
            object.__setattr__(self, "zeta", _as_vector(self.zeta, "zeta"))
        if self.xi is not None:
            object.__setattr__(self, "xi", _as_vector(self.xi, "xi"))

    def z(self):
        """Stacked decision vector (x, u, r)."""
        return np.concatenate([self.x, self.u, self.r])

    def with_ll_data(self, gamma, ll_value, zeta=None, xi=None):
        return replace(self, gamma=gamma, zeta=zeta, xi=xi, ll_value=ll_value)


def linearized_gap(spec, x, r, prev, u=None):
    """Linearized value-function constraint
    ``V_k(z) = l(x[,u]) - l(x~) - <xi, u - u_k> + <gamma, r - r_k>``
    around the annotated iterate ``prev``."""
    if prev.gamma is None or prev.ll_value is None:
        raise StateError("previous iterate carries no lower-level multipliers")
    v = spec.full_point(x, u)
    gap = spec.ll_loss.value(v) - prev.ll_value + float(prev.gamma @ (r - prev.r))
    if spec.general_mode:
        if prev.xi is None:
            raise StateError("general mode requires the xi subgradient on the iterate")
        gap -= float(prev.xi @ (np.asarray(u) - prev.u))
    return gap


def feasibility_gap(spec, nxt, prev):
    """Feasibility measure ``t`` of the candidate ``nxt`` against the
    subproblem built at ``prev``:

    ``t = max(0, V_k(z), max_i P_i(x) - r_i[, max_i g_i(x, u)])``.

    Returns 0 exactly when the candidate satisfies both the linearized
    value-function row and all budget (and constraint) rows.
    """
    u = nxt.u if spec.general_mode else None
    terms = [0.0, linearized_gap(spec, nxt.x, nxt.r, prev, u)]
    terms.extend(penalty_vector(spec, nxt.x, u) - nxt.r)
    if spec.n_constraints:
        terms.extend(constraint_values(spec, nxt.x, u))
    return float(max(terms))
