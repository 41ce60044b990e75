# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ADMM iteration loop.

Mirrors ``_loop_py.run_chunk`` over the same workspace; the driver picks
whichever is importable.  The linear solve uses the cached symmetric
inverse via BLAS dsymv, the constraint matvecs run over CSR arrays.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, isfinite, sqrt

from scipy.linalg.cython_blas cimport dsymv

cnp.import_array()

RUNNING = 0
CONVERGED = 1
DIVERGED = 2


cdef void _csr_matvec(double[::1] data, int[::1] indices, int[::1] indptr,
                      double[::1] x, double[::1] out, Py_ssize_t nrows) noexcept:
    cdef Py_ssize_t i, k
    cdef double acc
    for i in range(nrows):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = acc


cdef void _project_shifted(double[::1] bs, int[::1] kinds, int[::1] starts,
                           double[::1] v, double[::1] out) noexcept:
    cdef Py_ssize_t ib, s, e, j
    cdef double t, nx, scale
    for ib in range(kinds.shape[0]):
        s = starts[ib]
        e = starts[ib + 1]
        if kinds[ib] == 0:
            for j in range(s, e):
                out[j] = bs[j]
        elif kinds[ib] == 1:
            for j in range(s, e):
                out[j] = v[j] if v[j] < bs[j] else bs[j]
        else:
            t = bs[s] - v[s]
            nx = 0.0
            for j in range(s + 1, e):
                nx += (bs[j] - v[j]) * (bs[j] - v[j])
            nx = sqrt(nx)
            if nx <= t:
                for j in range(s, e):
                    out[j] = v[j]
            elif nx <= -t:
                for j in range(s, e):
                    out[j] = bs[j]
            else:
                scale = 0.5 * (t + nx)
                out[s] = bs[s] - scale
                for j in range(s + 1, e):
                    out[j] = bs[j] - (scale / nx) * (bs[j] - v[j])


def run_chunk(ws, Py_ssize_t iters):
    cdef double[::1] qs = ws.qs
    cdef double[::1] bs = ws.bs
    cdef double[::1] x = ws.x
    cdef double[::1] w = ws.w
    cdef double[::1] y = ws.y
    cdef double[::1] rho = ws.rho
    cdef double[::1] rho_inv = ws.rho_inv
    cdef double[::1] dinv = ws.dinv
    cdef double[::1] einv = ws.einv
    cdef double[::1] stats = ws.stats
    cdef double[:, ::1] Minv = np.ascontiguousarray(ws.Minv)

    A = ws.A
    At = ws.At
    P = ws.P
    cdef double[::1] A_data = A.data
    cdef int[::1] A_indices = np.asarray(A.indices, dtype=np.int32)
    cdef int[::1] A_indptr = np.asarray(A.indptr, dtype=np.int32)
    cdef double[::1] At_data = At.data
    cdef int[::1] At_indices = np.asarray(At.indices, dtype=np.int32)
    cdef int[::1] At_indptr = np.asarray(At.indptr, dtype=np.int32)
    cdef double[::1] P_data = P.data
    cdef int[::1] P_indices = np.asarray(P.indices, dtype=np.int32)
    cdef int[::1] P_indptr = np.asarray(P.indptr, dtype=np.int32)

    cdef int[::1] kinds = ws.kinds
    cdef int[::1] starts = ws.starts

    cdef Py_ssize_t n = ws.n
    cdef Py_ssize_t m = ws.m
    cdef double sigma = ws.sigma
    cdef double relax = ws.relax
    cdef double one_m = 1.0 - relax
    cdef double cinv = ws.cinv
    cdef double eps_abs = ws.eps_abs
    cdef double eps_rel = ws.eps_rel
    cdef Py_ssize_t check_every = ws.check_every
    cdef double diverge_norm = ws.diverge_norm

    work = np.empty(m, dtype=np.float64)
    cdef double[::1] tmp_m = work
    cdef double[::1] rhs = np.empty(n, dtype=np.float64)
    cdef double[::1] xt = np.empty(n, dtype=np.float64)
    cdef double[::1] zt = np.empty(m, dtype=np.float64)
    cdef double[::1] v = np.empty(m, dtype=np.float64)
    cdef double[::1] w_new = np.empty(m, dtype=np.float64)
    cdef double[::1] px = np.empty(n, dtype=np.float64)
    cdef double[::1] aty = np.empty(n, dtype=np.float64)

    cdef Py_ssize_t it, j
    cdef int nI = <int> n
    cdef int inc = 1
    cdef double alpha_b = 1.0, beta_b = 0.0
    cdef Py_ssize_t done = 0
    cdef double r_p, r_d, s_p, s_d, u1, u2, t1, t2, t3, aval
    cdef char uplo = b'L'

    for it in range(iters):
        for j in range(m):
            tmp_m[j] = rho[j] * w[j] - y[j]
        _csr_matvec(At_data, At_indices, At_indptr, tmp_m, rhs, n)
        for j in range(n):
            rhs[j] += sigma * x[j] - qs[j]
        # xt = Minv @ rhs, Minv symmetric full storage
        dsymv(&uplo, &nI, &alpha_b, &Minv[0, 0], &nI, &rhs[0], &inc, &beta_b, &xt[0], &inc)
        _csr_matvec(A_data, A_indices, A_indptr, xt, zt, m)
        for j in range(n):
            x[j] = relax * xt[j] + one_m * x[j]
        for j in range(m):
            v[j] = relax * zt[j] + one_m * w[j] + y[j] * rho_inv[j]
        _project_shifted(bs, kinds, starts, v, w_new)
        for j in range(m):
            y[j] = rho[j] * (v[j] - w_new[j])
            w[j] = w_new[j]
        done += 1
        if done % check_every == 0 or done == iters:
            _csr_matvec(A_data, A_indices, A_indptr, x, zt, m)
            r_p = 0.0
            s_p = 0.0
            for j in range(m):
                u1 = einv[j] * zt[j]
                u2 = einv[j] * w[j]
                aval = fabs(u1 - u2)
                if aval > r_p:
                    r_p = aval
                if fabs(u1) > s_p:
                    s_p = fabs(u1)
                if fabs(u2) > s_p:
                    s_p = fabs(u2)
            _csr_matvec(P_data, P_indices, P_indptr, x, px, n)
            _csr_matvec(At_data, At_indices, At_indptr, y, aty, n)
            r_d = 0.0
            s_d = 0.0
            for j in range(n):
                t1 = cinv * dinv[j] * px[j]
                t2 = cinv * dinv[j] * qs[j]
                t3 = cinv * dinv[j] * aty[j]
                aval = fabs(t1 + t2 + t3)
                if aval > r_d:
                    r_d = aval
                if fabs(t1) > s_d:
                    s_d = fabs(t1)
                if fabs(t2) > s_d:
                    s_d = fabs(t2)
                if fabs(t3) > s_d:
                    s_d = fabs(t3)
            stats[0] = r_p
            stats[1] = r_d
            stats[2] = s_p
            stats[3] = s_d
            if not (isfinite(r_p) and isfinite(r_d)):
                ws.iters_done = done
                return DIVERGED
            aval = 0.0
            for j in range(n):
                if fabs(x[j]) > aval:
                    aval = fabs(x[j])
            if aval > diverge_norm:
                ws.iters_done = done
                return DIVERGED
            if r_p <= eps_abs + eps_rel * s_p and r_d <= eps_abs + eps_rel * s_d:
                ws.iters_done = done
                return CONVERGED
    ws.iters_done = done
    return RUNNING
