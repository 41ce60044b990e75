"""Builders turning datasets into bilevel tuning instances.

Three model families: elastic net (l1 + squared-l2 budgets on a least
squares fit), sparse group lasso (per-group l2 budgets plus a global l1
budget), and T-fold cross-validated SVM with box feature bounds (one
shared margin budget across folds, per-feature bound variables in the
upper-level block ``u``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError
from .pieces import Affine, BilevelSpec, HingeSum, L1Norm, L2Norm, QuadLoss, SquaredL2

__all__ = [
    "elastic_net_spec",
    "sparse_group_lasso_spec",
    "svm_crossval_spec",
    "SvmFolds",
    "svm_fold_average",
    "HyperMap",
    "elastic_net_hyper_map",
    "sparse_group_lasso_hyper_map",
    "svm_hyper_map",
    "squared_error",
    "zero_one_error",
]


def _check_regression(ds, name):
    if ds.sample_count == 0:
        raise InvalidInputError(f"{name} split is empty")


def elastic_net_spec(train, val):
    """Elastic net: validation/training squared error, budgets on
    ``||beta||_1`` and ``0.5 ||beta||_2^2``."""
    _check_regression(train, "train")
    _check_regression(val, "validation")
    if train.feature_dim != val.feature_dim:
        raise InvalidInputError("train/validation feature dimensions disagree")
    p = train.feature_dim
    every = np.arange(p)
    return BilevelSpec(
        ul_loss=QuadLoss(A=val.features, b=val.targets),
        ll_loss=QuadLoss(A=train.features, b=train.targets),
        penalties=(L1Norm(dim=p, block=every), SquaredL2(dim=p, block=every, scale=0.5)),
        x_dim=p,
    )


def sparse_group_lasso_spec(train, val, groups):
    """Sparse group lasso: one l2 budget per group plus a global l1 budget."""
    _check_regression(train, "train")
    _check_regression(val, "validation")
    if train.feature_dim != val.feature_dim:
        raise InvalidInputError("train/validation feature dimensions disagree")
    p = train.feature_dim
    seen = np.zeros(p, dtype=bool)
    for g in groups:
        idx = np.asarray(g, dtype=int)
        if np.any(seen[idx]):
            raise InvalidInputError("groups overlap")
        seen[idx] = True
    if not np.all(seen):
        raise InvalidInputError("groups do not cover all features")
    penalties = tuple(L2Norm(dim=p, block=np.asarray(g, dtype=int)) for g in groups)
    penalties = penalties + (L1Norm(dim=p, block=np.arange(p)),)
    return BilevelSpec(
        ul_loss=QuadLoss(A=val.features, b=val.targets),
        ll_loss=QuadLoss(A=train.features, b=train.targets),
        penalties=penalties,
        x_dim=p,
    )


@dataclass(frozen=True)
class SvmFolds:
    """Fold layout of the cross-validated SVM decision vector: per fold
    ``(w_t, c_t)`` stacked, then the shared bound block ``u = w_bar``."""

    n_folds: int
    p: int
    val_indices: tuple

    @property
    def x_dim(self):
        return self.n_folds * (self.p + 1)

    def w_slice(self, t):
        start = t * (self.p + 1)
        return slice(start, start + self.p)

    def c_index(self, t):
        return t * (self.p + 1) + self.p


def svm_crossval_spec(data, n_folds, wbar_lb=1e-6, wbar_ub=10.0):
    """T-fold cross-validated SVM with per-feature box bounds.

    Decision vector: per fold ``(w_t, c_t)``; upper-level block
    ``u = w_bar`` with domain ``[wbar_lb, wbar_ub]^p``.  One shared
    margin budget bounds every fold's ``0.5 ||w_t||^2``; box rows
    ``+-w_t <= w_bar`` enter as training constraints.  Upper level is
    the fold-averaged validation hinge loss.

    Returns (spec, folds layout).
    """
    if n_folds < 2:
        raise InvalidInputError("cross-validation needs at least two folds")
    if not 0 < wbar_lb <= wbar_ub:
        raise InvalidInputError("need 0 < wbar_lb <= wbar_ub")
    labels = np.asarray(data.targets, dtype=float)
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise InvalidInputError("SVM labels must be in {-1, +1}")
    n, p = data.features.shape
    if n < 2 * n_folds:
        raise InvalidInputError("too few samples for the requested folds")
    bounds_idx = np.array_split(np.arange(n), n_folds)
    folds = SvmFolds(n_folds=n_folds, p=p, val_indices=tuple(tuple(ix) for ix in bounds_idx))
    x_dim = folds.x_dim
    dim = x_dim + p

    def classifier_rows(sample_rows, t):
        rows = np.zeros((len(sample_rows), dim))
        rows[:, folds.w_slice(t)] = data.features[sample_rows]
        rows[:, folds.c_index(t)] = -1.0
        return rows

    tr_rows, tr_labels = [], []
    val_rows, val_labels, val_weights = [], [], []
    for t in range(n_folds):
        val_ix = np.asarray(bounds_idx[t])
        tr_ix = np.setdiff1d(np.arange(n), val_ix)
        fold_lab = labels[tr_ix]
        if np.all(fold_lab == fold_lab[0]):
            warnings.warn(f"fold {t} training split has a single class", stacklevel=2)
        tr_rows.append(classifier_rows(tr_ix, t))
        tr_labels.append(labels[tr_ix])
        val_rows.append(classifier_rows(val_ix, t))
        val_labels.append(labels[val_ix])
        val_weights.append(np.full(val_ix.size, 1.0 / (n_folds * val_ix.size)))

    ll_loss = HingeSum(A=np.vstack(tr_rows), labels=np.concatenate(tr_labels))
    ul_loss = HingeSum(
        A=np.vstack(val_rows),
        labels=np.concatenate(val_labels),
        weights=np.concatenate(val_weights),
    )
    penalties = tuple(
        SquaredL2(dim=dim, block=np.arange(folds.w_slice(t).start, folds.w_slice(t).stop), scale=0.5)
        for t in range(n_folds)
    )
    constraints: List[Affine] = []
    for t in range(n_folds):
        w_off = folds.w_slice(t).start
        for j in range(p):
            for sign in (1.0, -1.0):
                c = np.zeros(dim)
                c[w_off + j] = sign
                c[x_dim + j] = -1.0
                constraints.append(Affine(coeffs=c))
    spec = BilevelSpec(
        ul_loss=ul_loss,
        ll_loss=ll_loss,
        penalties=penalties,
        penalty_levels=tuple([0] * n_folds),
        ll_constraints=tuple(constraints),
        x_dim=x_dim,
        u_dim=p,
        u_lower=np.full(p, wbar_lb),
        u_upper=np.full(p, wbar_ub),
    )
    return spec, folds


def svm_fold_average(folds, x):
    """Fold-averaged classifier (w, c) used for test prediction."""
    x = np.asarray(x, dtype=float)
    w = np.mean([x[folds.w_slice(t)] for t in range(folds.n_folds)], axis=0)
    c = np.mean([x[folds.c_index(t)] for t in range(folds.n_folds)])
    return w, float(c)


def squared_error(dataset, beta, per_sample=True):
    """Validation-style loss ``0.5 * sum (b - a'beta)^2``, averaged per
    sample by default."""
    res = dataset.features @ np.asarray(beta) - dataset.targets
    total = 0.5 * float(res @ res)
    return total / dataset.sample_count if per_sample else total


def zero_one_error(dataset, w, c):
    """Misclassification rate of ``sign(a'w - c)``."""
    pred = np.sign(dataset.features @ np.asarray(w) - c)
    pred[pred == 0] = 1.0
    return float(np.mean(pred != dataset.targets))


@dataclass(frozen=True)
class HyperMap:
    """Search-space description for the baselines: per-axis base-10
    exponent ranges plus the decoding of an exponent vector into
    (penalty weights, u block)."""

    log_ranges: tuple
    decode: callable

    @property
    def n_axes(self):
        return len(self.log_ranges)


def elastic_net_hyper_map(log_range=(-5.0, 2.0)):
    def decode(exps):
        lam = 10.0 ** np.asarray(exps, dtype=float)
        return lam, None

    return HyperMap(log_ranges=(tuple(log_range),) * 2, decode=decode)


def sparse_group_lasso_hyper_map(n_groups, log_range=(-3.0, 1.0), per_group=False):
    """Two axes (shared group weight, l1 weight) by default; per-group
    axes when ``per_group`` (random-search style)."""
    if per_group:
        def decode(exps):
            return 10.0 ** np.asarray(exps, dtype=float), None

        return HyperMap(log_ranges=(tuple(log_range),) * (n_groups + 1), decode=decode)

    def decode(exps):
        lam = np.empty(n_groups + 1)
        lam[:n_groups] = 10.0 ** exps[0]
        lam[n_groups] = 10.0 ** exps[1]
        return lam, None

    return HyperMap(log_ranges=(tuple(log_range),) * 2, decode=decode)


def svm_hyper_map(p, lam_range=(-4.0, 4.0), wbar_range=(-6.0, 2.0), per_feature=False):
    """Axes (margin weight, shared bound exponent); per-feature bound
    axes when ``per_feature`` (random-search style)."""
    if per_feature:
        def decode(exps):
            exps = np.asarray(exps, dtype=float)
            return np.array([10.0 ** exps[0]]), 10.0 ** exps[1:]

        return HyperMap(
            log_ranges=(tuple(lam_range),) + (tuple(wbar_range),) * p, decode=decode
        )

    def decode(exps):
        return np.array([10.0 ** exps[0]]), np.full(p, 10.0 ** exps[1])

    return HyperMap(log_ranges=(tuple(lam_range), tuple(wbar_range)), decode=decode)
