"""Diagonal (Ruiz-style) equilibration of cone programs.

Row scalings must be uniform inside each second-order cone block: the
cone is invariant only under a single positive scalar per block.  The
cost scaling is computed from P alone so a cached factorization stays
valid when only q and b change between re-solves.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

_MIN_SCALE = 1e-4
_MAX_SCALE = 1e4


def _col_max_abs(mat):
    if mat.nnz == 0:
        return np.zeros(mat.shape[1])
    return np.asarray(abs(mat).max(axis=0).todense()).ravel()


def _row_max_abs(mat):
    if mat.nnz == 0:
        return np.zeros(mat.shape[0])
    return np.asarray(abs(mat).max(axis=1).todense()).ravel()


def _guarded_inv_sqrt(v):
    out = np.sqrt(np.clip(v, 0.0, None))
    out[out == 0.0] = 1.0
    return 1.0 / np.clip(out, 1.0 / _MAX_SCALE, _MAX_SCALE)


def ruiz_equilibrate(P, A, cones, iters=10):
    """Return (d, e, c, Ps, As): variable/row scalings, cost scaling and
    the scaled matrices ``Ps = c * D P D`` and ``As = E A D``."""
    n = P.shape[0]
    m = A.shape[0]
    d = np.ones(n)
    e = np.ones(m)
    Ps = P.tocsr(copy=True)
    As = A.tocsr(copy=True)
    soc_slices = []
    start = 0
    for blk in cones:
        if blk.kind == "soc":
            soc_slices.append((start, start + blk.dim))
        start += blk.dim
    for _ in range(iters):
        col = np.maximum(_col_max_abs(Ps), _col_max_abs(As))
        dd = _guarded_inv_sqrt(col)
        row = _row_max_abs(As)
        for s, t in soc_slices:
            row[s:t] = row[s:t].max() if t > s else 0.0
        ee = _guarded_inv_sqrt(row)
        Dd = sp.diags(dd)
        Ps = Dd @ Ps @ Dd
        if m:
            As = sp.diags(ee) @ As @ Dd
        d *= dd
        e *= ee
    if Ps.nnz:
        col = _col_max_abs(Ps)
        mean_norm = float(col[col > 0].mean()) if np.any(col > 0) else 0.0
        c = 1.0 / max(1.0, mean_norm)
    else:
        c = 1.0
    Ps = c * Ps
    return d, e, c, Ps.tocsr(), As.tocsr()
