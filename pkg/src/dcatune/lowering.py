"""Exact lowering of bilevel pieces into cone programs.

Three lowerings share the rules here:

* the training problem at fixed budgets ``min l(x)  s.t. P_i(x) <= r_i,
  g(x, u) <= 0`` (value-function oracle),
* the classically penalized training problem ``min l + sum_i lam_i P_i``
  (search baselines), built so that the weights enter only the linear
  cost, and
* the strongly convex outer subproblem
  ``min L + (rho/2)||z - z_k||^2 + alpha * s`` with rows
  ``s >= 0``, ``V_k(z) <= s``, ``P_i - r_i <= s`` (and ``g_i <= s``),
  where only the concave value-function part is linearized; the
  training loss inside ``V_k`` stays in lowered slack/cone form.

Transformations: an l1 budget splits coordinates into nonnegative parts
(``x = p - n``, ``sum(p + n) <= level``), an l2 budget becomes one
second-order cone block, squared norms and quadratic losses use the
standard rotated-cone identity, hinge terms use nonnegative slacks.
Every rule records which rows carry the budget multipliers so duals can
be read back as (gamma, zeta, eta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import (
    DualsUnavailableError,
    InvalidInputError,
    StateError,
    UnsupportedPieceError,
)
from .kernel import NONNEG, SOC, ZERO, ConeBlock, ConeProgram
from .kernel.program import OPTIMAL
from .pieces import (
    Affine,
    BilevelSpec,
    BoxGap,
    HingeSum,
    L1Norm,
    L2Norm,
    QuadLoss,
    SquaredL2,
)

# Budget level treated as "unconstrained" by harness utilities; exact
# enough for desk-scale data, not meant for production-size norms.
BIG_M = 1e6

# Multiplier cap at zero budgets: a squared-norm budget at exactly 0 has
# no finite multiplier (the value function's slope blows up); reported
# multipliers there use this floor on the budget in the chain rule.
_BOUNDARY_EPS = 1e-8

DualTerms = List[Tuple[int, float]]


@dataclass
class LinExpr:
    """Affine expression  sum(vals * z[cols]) + const  over program columns."""

    cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    vals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    const: float = 0.0

    @staticmethod
    def constant(c):
        return LinExpr(const=float(c))

    @staticmethod
    def single(col, val=1.0, const=0.0):
        return LinExpr(np.array([col]), np.array([float(val)]), const)

    def scaled(self, a):
        return LinExpr(self.cols, a * self.vals, a * self.const)


class AmbientMap:
    """Maps ambient piece coordinates to program columns or fixed values."""

    def __init__(self, cols, fixed):
        self.cols = np.asarray(cols, dtype=int)
        self.fixed = np.asarray(fixed, dtype=float)

    @staticmethod
    def for_ll(x_cols, u_values):
        cols = np.concatenate([x_cols, -np.ones(len(u_values), dtype=int)])
        fixed = np.concatenate([np.zeros(len(x_cols)), u_values])
        return AmbientMap(cols, fixed)

    @staticmethod
    def for_joint(x_cols, u_cols):
        cols = np.concatenate([x_cols, u_cols]).astype(int)
        return AmbientMap(cols, np.zeros(cols.size))

    def linear(self, amb_idx, coefs):
        """Split an ambient linear form into (cols, vals, const)."""
        amb_idx = np.asarray(amb_idx, dtype=int)
        coefs = np.asarray(coefs, dtype=float)
        cols = self.cols[amb_idx]
        free = cols >= 0
        const = float(coefs[~free] @ self.fixed[amb_idx[~free]]) if np.any(~free) else 0.0
        return cols[free], coefs[free], const

    def free_block(self, amb_idx):
        amb_idx = np.asarray(amb_idx, dtype=int)
        cols = self.cols[amb_idx]
        free = cols >= 0
        return amb_idx[free], cols[free], amb_idx[~free]


class ProgramBuilder:
    """Incremental cone-program assembly with row bookkeeping."""

    def __init__(self):
        self.nvars = 0
        self._p_i: List[np.ndarray] = []
        self._p_j: List[np.ndarray] = []
        self._p_v: List[np.ndarray] = []
        self._q: List[Tuple[np.ndarray, np.ndarray]] = []
        self._row_cols: List[np.ndarray] = []
        self._row_vals: List[np.ndarray] = []
        self._row_b: List[float] = []
        self._blocks: List[List] = []  # [kind, count], merged runs for zero/nonneg
        self.obj_const = 0.0
        # (cols, fn(ambient point) -> values): how to seed auxiliary
        # variables from a candidate ambient point (warm starts only)
        self.warm_rules: List[Tuple[np.ndarray, object]] = []

    def new_vars(self, k):
        cols = np.arange(self.nvars, self.nvars + k)
        self.nvars += k
        return cols

    def add_quad_block(self, rows_cols, block):
        """Add a dense symmetric block of P at the given columns."""
        rows_cols = np.asarray(rows_cols, dtype=int)
        k = rows_cols.size
        ii, jj = np.meshgrid(rows_cols, rows_cols, indexing="ij")
        self._p_i.append(ii.ravel())
        self._p_j.append(jj.ravel())
        self._p_v.append(np.asarray(block, dtype=float).ravel())

    def add_quad_diag(self, cols, vals):
        cols = np.asarray(cols, dtype=int)
        self._p_i.append(cols)
        self._p_j.append(cols)
        self._p_v.append(np.broadcast_to(np.asarray(vals, dtype=float), cols.shape).copy())

    def add_lin(self, cols, vals):
        cols = np.asarray(cols, dtype=int)
        self._q.append((cols, np.broadcast_to(np.asarray(vals, dtype=float), cols.shape).copy()))

    def _push_row(self, kind, cols, vals, b):
        self._row_cols.append(np.asarray(cols, dtype=int))
        self._row_vals.append(np.asarray(vals, dtype=float))
        self._row_b.append(float(b))
        if kind == SOC:
            raise AssertionError("soc rows go through add_soc_block")
        if self._blocks and self._blocks[-1][0] == kind:
            self._blocks[-1][1] += 1
        else:
            self._blocks.append([kind, 1])
        return len(self._row_b) - 1

    def add_zero_row(self, cols, vals, b):
        """Row  sum(vals * z) = b."""
        return self._push_row(ZERO, cols, vals, b)

    def add_nonneg_row(self, cols, vals, b):
        """Row  sum(vals * z) <= b."""
        return self._push_row(NONNEG, cols, vals, b)

    def add_leq_expr(self, lhs: LinExpr, rhs: LinExpr):
        """Row  lhs <= rhs  for two affine expressions."""
        cols = np.concatenate([lhs.cols, rhs.cols])
        vals = np.concatenate([lhs.vals, -rhs.vals])
        return self.add_nonneg_row(cols, vals, rhs.const - lhs.const)

    def add_soc_block(self, rows):
        """Append an SOC block; ``rows`` are (cols, vals, b) with the cone
        element being  b - sum(vals * z)  per row.  Returns first row index."""
        start = len(self._row_b)
        for cols, vals, b in rows:
            self._row_cols.append(np.asarray(cols, dtype=int))
            self._row_vals.append(np.asarray(vals, dtype=float))
            self._row_b.append(float(b))
        self._blocks.append([SOC, len(rows)])
        return start

    def add_expr_rows_soc(self, exprs):
        """SOC block whose i-th element equals the affine expression."""
        return self.add_soc_block([(e.cols, -e.vals, e.const) for e in exprs])

    def build(self, validate=False):
        n = self.nvars
        if self._p_i:
            P = sp.coo_matrix(
                (np.concatenate(self._p_v), (np.concatenate(self._p_i), np.concatenate(self._p_j))),
                shape=(n, n),
            ).tocsr()
        else:
            P = sp.csr_matrix((n, n))
        q = np.zeros(n)
        for cols, vals in self._q:
            np.add.at(q, cols, vals)
        m = len(self._row_b)
        if m:
            counts = np.array([c.size for c in self._row_cols])
            rows_idx = np.repeat(np.arange(m), counts)
            A = sp.coo_matrix(
                (
                    np.concatenate(self._row_vals) if counts.sum() else np.zeros(0),
                    (rows_idx, np.concatenate(self._row_cols) if counts.sum() else np.zeros(0, dtype=int)),
                ),
                shape=(m, n),
            ).tocsr()
            A.sum_duplicates()
        else:
            A = sp.csr_matrix((0, n))
        cones = tuple(ConeBlock(kind, cnt) for kind, cnt in self._blocks)
        prog = ConeProgram(P=P, q=q, A=A, b=np.array(self._row_b), cones=cones)
        if validate:
            prog.validate()
        return prog


@dataclass
class RowMap:
    """Where things live in a lowered program.

    ``level_duals[j]`` lists (row, weight) pairs whose weighted dual sum
    is the multiplier of budget level j; ``piece_duals`` the same per
    penalty piece, ``constraint_duals`` per training constraint, and
    ``vk_dual`` for the linearized value-function row.
    """

    x: np.ndarray
    u: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None
    s: Optional[int] = None
    aux_t: Optional[np.ndarray] = None
    n_vars: int = 0
    level_duals: List[DualTerms] = field(default_factory=list)
    piece_duals: List[DualTerms] = field(default_factory=list)
    constraint_duals: List[DualTerms] = field(default_factory=list)
    vk_dual: Optional[DualTerms] = None
    warm_rules: List[Tuple[np.ndarray, object]] = field(default_factory=list)


@dataclass
class DualBundle:
    gamma: np.ndarray
    zeta: np.ndarray
    piece_gammas: np.ndarray
    eta: Optional[float] = None


def _combine(y, terms, clamp=True):
    val = sum(w * y[i] for i, w in terms)
    return max(val, 0.0) if clamp else val


def extract_duals(result, row_map):
    """Read budget/constraint multipliers off the cone duals.

    Nonnegative by construction up to solver tolerance; tiny negative
    values are clamped to zero.

    Raises
    ------
    DualsUnavailableError
        If the solve did not reach the optimal status.
    """
    if result.status != OPTIMAL:
        raise DualsUnavailableError(f"duals unavailable: solver status {result.status!r}")
    y = result.y
    gamma = np.array([_combine(y, terms) for terms in row_map.level_duals])
    pieces = np.array([_combine(y, terms) for terms in row_map.piece_duals])
    zeta = np.array([_combine(y, terms) for terms in row_map.constraint_duals])
    eta = _combine(y, row_map.vk_dual) if row_map.vk_dual is not None else None
    return DualBundle(gamma=gamma, zeta=zeta, piece_gammas=pieces, eta=eta)


def _lower_leq(bld, piece, amap, rhs) -> DualTerms:
    """Add rows enforcing ``piece(v) <= rhs``; return the dual terms whose
    weighted sum is the constraint's multiplier."""
    if isinstance(piece, Affine):
        cols, vals, const = amap.linear(np.arange(piece.dim), piece.coeffs)
        row = bld.add_leq_expr(LinExpr(cols, vals, const + piece.constant), rhs)
        return [(row, 1.0)]

    if isinstance(piece, L1Norm):
        free_amb, free_cols, fixed_amb = amap.free_block(piece.block)
        k = free_cols.size
        fixed_abs = float(np.abs(amap.fixed[fixed_amb]).sum()) if fixed_amb.size else 0.0
        pos = bld.new_vars(k)
        neg = bld.new_vars(k)
        for i in range(k):
            bld.add_zero_row([free_cols[i], pos[i], neg[i]], [1.0, -1.0, 1.0], 0.0)
        for v in np.concatenate([pos, neg]):
            bld.add_nonneg_row([v], [-1.0], 0.0)
        bld.warm_rules.append(
            (
                np.concatenate([pos, neg]),
                lambda v, fa=free_amb: np.concatenate(
                    [np.maximum(v[fa], 0.0), np.maximum(-v[fa], 0.0)]
                ),
            )
        )
        lhs = LinExpr(np.concatenate([pos, neg]), np.ones(2 * k), fixed_abs)
        row = bld.add_leq_expr(lhs, rhs)
        return [(row, 1.0)]

    if isinstance(piece, L2Norm):
        exprs = [rhs]
        for amb in piece.block:
            col = amap.cols[amb]
            if col >= 0:
                exprs.append(LinExpr.single(col))
            else:
                exprs.append(LinExpr.constant(amap.fixed[amb]))
        start = bld.add_expr_rows_soc(exprs)
        return [(start, 1.0)]

    if isinstance(piece, SquaredL2):
        if rhs.cols.size == 0:
            # constant budget: plain ball ||x_B|| <= sqrt(rhs/scale); the
            # rotated form loses dual attainment as the budget shrinks,
            # the ball form keeps the cone dual bounded by the gradient
            radius = math.sqrt(max(rhs.const, 0.0) / piece.scale)
            exprs = [LinExpr.constant(radius)]
            for amb in piece.block:
                col = amap.cols[amb]
                exprs.append(
                    LinExpr.single(col) if col >= 0 else LinExpr.constant(amap.fixed[amb])
                )
            start = bld.add_expr_rows_soc(exprs)
            denom = 2.0 * math.sqrt(piece.scale * max(rhs.const, _BOUNDARY_EPS))
            return [(start, 1.0 / denom)]
        half = 0.5 / piece.scale
        head = rhs.scaled(half)
        exprs = [LinExpr(head.cols, head.vals, head.const + 0.5)]
        for amb in piece.block:
            col = amap.cols[amb]
            exprs.append(
                LinExpr.single(col) if col >= 0 else LinExpr.constant(amap.fixed[amb])
            )
        exprs.append(LinExpr(head.cols, head.vals, head.const - 0.5))
        start = bld.add_expr_rows_soc(exprs)
        last = start + len(exprs) - 1
        return [(start, half), (last, half)]

    if isinstance(piece, QuadLoss):
        residual_exprs = []
        for i in range(piece.A.shape[0]):
            rowvec = piece.A[i]
            nz = np.nonzero(rowvec)[0]
            cols, vals, const = amap.linear(nz, rowvec[nz])
            residual_exprs.append(LinExpr(cols, vals, const - piece.b[i]))
        if rhs.cols.size == 0:
            # constant bound: ball form (see the squared-norm case)
            radius = math.sqrt(2.0 * max(rhs.const, 0.0) / piece.scale)
            start = bld.add_expr_rows_soc([LinExpr.constant(radius)] + residual_exprs)
            denom = math.sqrt(2.0 * piece.scale * max(rhs.const, _BOUNDARY_EPS))
            return [(start, 1.0 / denom)]
        inv = 1.0 / piece.scale
        head = rhs.scaled(inv)
        exprs = (
            [LinExpr(head.cols, head.vals, head.const + 0.5)]
            + residual_exprs
            + [LinExpr(head.cols, head.vals, head.const - 0.5)]
        )
        start = bld.add_expr_rows_soc(exprs)
        last = start + len(exprs) - 1
        return [(start, inv), (last, inv)]

    if isinstance(piece, HingeSum):
        n_s = piece.labels.size
        h = bld.new_vars(n_s)
        for j in range(n_s):
            rowvec = piece.A[j]
            nz = np.nonzero(rowvec)[0]
            cols, vals, const = amap.linear(nz, -piece.labels[j] * rowvec[nz])
            margin = LinExpr(cols, vals, const + piece.offsets[j])
            bld.add_leq_expr(margin, LinExpr.single(h[j]))
            bld.add_nonneg_row([h[j]], [-1.0], 0.0)
        bld.warm_rules.append((h, lambda v, pc=piece: np.maximum(pc.margins(v), 0.0)))
        row = bld.add_leq_expr(LinExpr(h, piece.weights.copy()), rhs)
        return [(row, 1.0)]

    if isinstance(piece, BoxGap):
        # exact epigraph only for rhs >= 0 (guaranteed: budgets and the
        # shared max slack are constrained nonnegative)
        terms: DualTerms = []
        for i, amb in enumerate(piece.block):
            col = amap.cols[amb]
            if col >= 0:
                r1 = bld.add_leq_expr(
                    LinExpr(np.array([col]), np.array([-1.0]), piece.lower[i]), rhs
                )
                r2 = bld.add_leq_expr(LinExpr.single(col, 1.0, -piece.upper[i]), rhs)
                terms.extend([(r1, 1.0), (r2, 1.0)])
            else:
                gap = max(
                    piece.lower[i] - amap.fixed[amb], amap.fixed[amb] - piece.upper[i], 0.0
                )
                terms.append((bld.add_leq_expr(LinExpr.constant(gap), rhs), 1.0))
        return terms

    raise UnsupportedPieceError(
        f"no lowering rule for {type(piece).__name__} as a constraint"
    )


def _lower_objective(bld, piece, amap, weight=1.0):
    """Add ``weight * piece(v)`` to the objective.  Supports the loss
    kinds that appear as objectives (quadratic, hinge, squared-l2,
    affine, l1 via splitting)."""
    if isinstance(piece, QuadLoss):
        amb = np.arange(piece.dim)
        free = amap.cols[amb] >= 0
        cols = amap.cols[amb[free]]
        Af = piece.A[:, free]
        resid_fixed = piece.A[:, ~free] @ amap.fixed[amb[~free]] - piece.b
        w = weight * piece.scale
        if cols.size:
            bld.add_quad_block(cols, w * (Af.T @ Af))
            bld.add_lin(cols, w * (Af.T @ resid_fixed))
        bld.obj_const += 0.5 * w * float(resid_fixed @ resid_fixed)
        return

    if isinstance(piece, SquaredL2):
        free_amb, cols, fixed_amb = amap.free_block(piece.block)
        w = weight * piece.scale
        if cols.size:
            bld.add_quad_diag(cols, 2.0 * w)
        bld.obj_const += w * float(amap.fixed[fixed_amb] @ amap.fixed[fixed_amb])
        return

    if isinstance(piece, Affine):
        cols, vals, const = amap.linear(np.arange(piece.dim), piece.coeffs)
        if cols.size:
            bld.add_lin(cols, weight * vals)
        bld.obj_const += weight * (const + piece.constant)
        return

    if isinstance(piece, HingeSum):
        n_s = piece.labels.size
        h = bld.new_vars(n_s)
        for j in range(n_s):
            rowvec = piece.A[j]
            nz = np.nonzero(rowvec)[0]
            cols, vals, const = amap.linear(nz, -piece.labels[j] * rowvec[nz])
            bld.add_leq_expr(LinExpr(cols, vals, const + piece.offsets[j]), LinExpr.single(h[j]))
            bld.add_nonneg_row([h[j]], [-1.0], 0.0)
        bld.warm_rules.append((h, lambda v, pc=piece: np.maximum(pc.margins(v), 0.0)))
        bld.add_lin(h, weight * piece.weights)
        return

    if isinstance(piece, L1Norm):
        free_amb, cols, fixed_amb = amap.free_block(piece.block)
        k = cols.size
        pos = bld.new_vars(k)
        neg = bld.new_vars(k)
        for i in range(k):
            bld.add_zero_row([cols[i], pos[i], neg[i]], [1.0, -1.0, 1.0], 0.0)
        for v in np.concatenate([pos, neg]):
            bld.add_nonneg_row([v], [-1.0], 0.0)
        bld.warm_rules.append(
            (
                np.concatenate([pos, neg]),
                lambda v, fa=free_amb: np.concatenate(
                    [np.maximum(v[fa], 0.0), np.maximum(-v[fa], 0.0)]
                ),
            )
        )
        bld.add_lin(np.concatenate([pos, neg]), weight)
        bld.obj_const += weight * float(np.abs(amap.fixed[fixed_amb]).sum())
        return

    raise UnsupportedPieceError(
        f"no objective lowering for {type(piece).__name__}"
    )


def _check_budgets(spec, r):
    r = np.asarray(r, dtype=float)
    if r.size != spec.n_levels:
        raise InvalidInputError(f"budget vector has size {r.size}, expected {spec.n_levels}")
    if np.any(r < 0):
        raise InvalidInputError("budgets must be nonnegative")
    return r


def _check_u(spec, u):
    if not spec.general_mode:
        return np.zeros(0)
    u = np.asarray(u, dtype=float)
    if u.size != spec.u_dim:
        raise InvalidInputError("u has the wrong dimension")
    if np.any(u < spec.u_lower - 1e-9) or np.any(u > spec.u_upper + 1e-9):
        raise InvalidInputError("u outside its box domain")
    return u


def lower_lower_level(spec, r, u=None):
    """Lower the training problem at fixed budgets (and fixed ``u``).

    The optimal value of the program equals ``v(r[, u])`` and the
    penalty-row duals form a training-problem multiplier.
    """
    r = _check_budgets(spec, r)
    u = _check_u(spec, u)
    bld = ProgramBuilder()
    x_cols = bld.new_vars(spec.x_dim)
    amap = AmbientMap.for_ll(x_cols, u)
    _lower_objective(bld, spec.ll_loss, amap, 1.0)
    rmap = RowMap(x=x_cols)
    rmap.level_duals = [[] for _ in range(spec.n_levels)]
    for piece, level in zip(spec.penalties, spec.penalty_levels):
        terms = _lower_leq(bld, piece, amap, LinExpr.constant(r[level]))
        rmap.piece_duals.append(terms)
        rmap.level_duals[level].extend(terms)
    for g in spec.ll_constraints:
        rmap.constraint_duals.append(_lower_leq(bld, g, amap, LinExpr.constant(0.0)))
    return bld.build(), rmap


def lower_penalized(spec, lam, u=None):
    """Lower ``min l + sum_i lam_i * P_i  s.t. g <= 0`` at fixed weights.

    Weights enter only the linear cost, so one cached factorization
    serves a whole search path.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.size != spec.n_levels or np.any(lam < 0):
        raise InvalidInputError("penalty weights must be a nonnegative J-vector")
    u = _check_u(spec, u)
    bld = ProgramBuilder()
    x_cols = bld.new_vars(spec.x_dim)
    amap = AmbientMap.for_ll(x_cols, u)
    _lower_objective(bld, spec.ll_loss, amap, 1.0)
    rmap = RowMap(x=x_cols)
    aux = []
    for piece, level in zip(spec.penalties, spec.penalty_levels):
        w = float(lam[level])
        if isinstance(piece, (L1Norm, HingeSum)):
            _lower_objective(bld, piece, amap, w)
        else:
            t = bld.new_vars(1)[0]
            aux.append(t)
            if isinstance(piece, BoxGap):
                bld.add_nonneg_row([t], [-1.0], 0.0)
            _lower_leq(bld, piece, amap, LinExpr.single(t))
            bld.add_lin([t], [w])
    for g in spec.ll_constraints:
        rmap.constraint_duals.append(_lower_leq(bld, g, amap, LinExpr.constant(0.0)))
    rmap.aux_t = np.array(aux, dtype=int)
    return bld.build(), rmap


def lower_subproblem(spec, prev, alpha, rho):
    """Lower the outer DC subproblem around the annotated iterate ``prev``.

    Objective ``L(x[, u]) + (rho/2) ||z - z_k||^2 + alpha * s`` with the
    shared epigraph scalar ``s`` bounding the linearized value-function
    row, every budget violation and every constraint piece; ``z`` is
    kept in ``Sigma`` (``r >= 0`` and ``u`` inside its box) by hard rows.
    The proximal term makes the program strongly convex in ``z``.
    """
    if prev.gamma is None or prev.ll_value is None:
        raise StateError("subproblem needs lower-level multipliers on the iterate")
    if spec.general_mode and prev.xi is None:
        raise StateError("general mode requires the xi subgradient on the iterate")
    if alpha <= 0 or rho <= 0:
        raise InvalidInputError("alpha and rho must be positive")
    bld = ProgramBuilder()
    x_cols = bld.new_vars(spec.x_dim)
    u_cols = bld.new_vars(spec.u_dim)
    r_cols = bld.new_vars(spec.n_levels)
    s_col = bld.new_vars(1)[0]
    amap = AmbientMap.for_joint(x_cols, u_cols)

    _lower_objective(bld, spec.ul_loss, amap, 1.0)
    z_cols = np.concatenate([x_cols, u_cols, r_cols])
    z_prev = prev.z()
    bld.add_quad_diag(z_cols, rho)
    bld.add_lin(z_cols, -rho * z_prev)
    bld.obj_const += 0.5 * rho * float(z_prev @ z_prev)
    bld.add_lin([s_col], [float(alpha)])

    rmap = RowMap(x=x_cols, u=u_cols if spec.general_mode else None, r=r_cols, s=s_col)

    # Sigma: r >= 0, u in its box, shared epigraph s >= 0
    for c in r_cols:
        bld.add_nonneg_row([c], [-1.0], 0.0)
    if spec.general_mode:
        for j, c in enumerate(u_cols):
            bld.add_nonneg_row([c], [-1.0], -float(spec.u_lower[j]))
            bld.add_nonneg_row([c], [1.0], float(spec.u_upper[j]))
    bld.add_nonneg_row([s_col], [-1.0], 0.0)

    # V_k(z) <= s  <=>  l(x, u) <= s - <gamma, r - r_k> + <xi, u - u_k> + l(x~_k)
    tau_cols = [s_col]
    tau_vals = [1.0]
    tau_const = float(prev.ll_value + prev.gamma @ prev.r)
    for j, c in enumerate(r_cols):
        tau_cols.append(c)
        tau_vals.append(-float(prev.gamma[j]))
    if spec.general_mode:
        for j, c in enumerate(u_cols):
            tau_cols.append(c)
            tau_vals.append(float(prev.xi[j]))
        tau_const -= float(prev.xi @ prev.u)
    tau = LinExpr(np.array(tau_cols), np.array(tau_vals), tau_const)
    rmap.vk_dual = _lower_leq(bld, spec.ll_loss, amap, tau)

    rmap.level_duals = [[] for _ in range(spec.n_levels)]
    for piece, level in zip(spec.penalties, spec.penalty_levels):
        rhs = LinExpr(np.array([r_cols[level], s_col]), np.ones(2), 0.0)
        terms = _lower_leq(bld, piece, amap, rhs)
        rmap.piece_duals.append(terms)
        rmap.level_duals[level].extend(terms)
    for g in spec.ll_constraints:
        rmap.constraint_duals.append(_lower_leq(bld, g, amap, LinExpr.single(s_col)))
    rmap.warm_rules = bld.warm_rules
    rmap.n_vars = bld.nvars
    return bld.build(), rmap


def subproblem_warm_vector(rmap, spec, center, s_value):
    """Seed the lowered subproblem's variables from an ambient point
    (the prox center): exact for the z-block and the split/slack
    auxiliaries, so a cold first solve starts feasible-ish."""
    z = np.zeros(rmap.n_vars)
    z[rmap.x] = center.x
    if rmap.u is not None:
        z[rmap.u] = center.u
    z[rmap.r] = center.r
    z[rmap.s] = max(float(s_value), 0.0)
    point = spec.full_point(center.x, center.u if spec.general_mode else None)
    for cols, fn in rmap.warm_rules:
        if cols.size:
            z[cols] = fn(point)
    return z
