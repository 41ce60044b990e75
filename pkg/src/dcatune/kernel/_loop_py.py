"""Pure-numpy ADMM iteration loop (fallback backend).

Both backends expose ``run_chunk(ws, iters)`` over the same workspace and
must produce identical iterates: the compiled kernel only removes the
per-iteration Python overhead.  Return codes: 0 = iteration budget spent,
1 = converged, 2 = diverged.
"""

from __future__ import annotations

import numpy as np

RUNNING, CONVERGED, DIVERGED = 0, 1, 2


def _project_shifted(ws, v):
    # w = b - proj_K(b - v), blockwise over cone blocks
    out = np.empty_like(v)
    b = ws.bs
    starts, kinds = ws.starts, ws.kinds
    for i in range(kinds.size):
        s, e = starts[i], starts[i + 1]
        k = kinds[i]
        if k == 0:  # zero cone: w = b
            out[s:e] = b[s:e]
        elif k == 1:  # nonneg: w = min(v, b)
            out[s:e] = np.minimum(v[s:e], b[s:e])
        else:  # soc
            d = b[s:e] - v[s:e]
            t, xx = d[0], d[1:]
            nx = np.linalg.norm(xx)
            if nx <= t:
                out[s:e] = v[s:e]
            elif nx <= -t:
                out[s:e] = b[s:e]
            else:
                scale = 0.5 * (t + nx)
                out[s] = b[s] - scale
                out[s + 1 : e] = b[s + 1 : e] - (scale / nx) * xx
    return out


def _residuals(ws):
    # unscaled residuals and their scale terms
    u1 = ws.einv * (ws.A @ ws.x)
    u2 = ws.einv * ws.w
    r_p = float(np.max(np.abs(u1 - u2))) if ws.m else 0.0
    s_p = float(max(np.max(np.abs(u1), initial=0.0), np.max(np.abs(u2), initial=0.0)))
    v1 = ws.cinv * ws.dinv * (ws.P @ ws.x)
    v2 = ws.cinv * ws.dinv * ws.qs
    v3 = ws.cinv * ws.dinv * (ws.At @ ws.y) if ws.m else np.zeros(ws.n)
    r_d = float(np.max(np.abs(v1 + v2 + v3)))
    s_d = float(
        max(
            np.max(np.abs(v1), initial=0.0),
            np.max(np.abs(v2), initial=0.0),
            np.max(np.abs(v3), initial=0.0),
        )
    )
    ws.stats[:4] = (r_p, r_d, s_p, s_d)
    return r_p, r_d, s_p, s_d


def run_chunk(ws, iters):
    """Advance the ADMM state by up to ``iters`` iterations."""
    relax = ws.relax
    one_m = 1.0 - relax
    done = 0
    for _ in range(iters):
        rhs = ws.sigma * ws.x - ws.qs + ws.At @ (ws.rho * ws.w - ws.y)
        xt = ws.Minv @ rhs
        zt = ws.A @ xt
        ws.x = relax * xt + one_m * ws.x
        v = relax * zt + one_m * ws.w + ws.y * ws.rho_inv
        w_new = _project_shifted(ws, v)
        ws.y = ws.rho * (v - w_new)
        ws.w = w_new
        done += 1
        if done % ws.check_every == 0 or done == iters:
            r_p, r_d, s_p, s_d = _residuals(ws)
            if not np.isfinite(r_p) or not np.isfinite(r_d):
                ws.iters_done = done
                return DIVERGED
            if np.max(np.abs(ws.x), initial=0.0) > ws.diverge_norm:
                ws.iters_done = done
                return DIVERGED
            if r_p <= ws.eps_abs + ws.eps_rel * s_p and r_d <= ws.eps_abs + ws.eps_rel * s_d:
                ws.iters_done = done
                return CONVERGED
    ws.iters_done = done
    return RUNNING
