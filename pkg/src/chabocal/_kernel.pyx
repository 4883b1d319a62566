# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled state-update kernel: backward-Euler viscoplastic integration.

Same algorithm as `_kernel_py` (the pure-Python twin); the whole path
loop runs without the GIL so independent forward runs parallelize across
threads.
"""

import numpy as np

from .errors import NoConvergence

from libc.math cimport fabs, pow, sqrt

BACKEND = "compiled"

cdef struct Pars:
    double sy
    double n
    double k
    double br
    double hr
    double bx
    double hx

cdef struct Scratch:
    double sdd
    double sdx
    double sxx
    double r0
    double dt

cdef struct Root:
    double dp
    double seq
    double r1


cdef inline double _pow_n(double x, double n) noexcept nogil:
    if n == 1.0:
        return x
    return pow(x, n)


cdef inline int _f_df(Pars* P, Scratch* S, double dp,
                      double* f, double* df, double* seq, double* r1) noexcept nogil:
    cdef double a, one_a, g2, g, sex, pd, dg, dseq, dr1, dpd
    a = P.bx * dp
    one_a = 1.0 + a
    g2 = 1.5 * (one_a * one_a * S.sdd - 2.0 * one_a * S.sdx + S.sxx)
    g = sqrt(g2) if g2 > 0.0 else 0.0
    seq[0] = (g - a * P.hx) / one_a
    r1[0] = (S.r0 + P.br * P.hr * dp) / (1.0 + P.br * dp)
    sex = seq[0] - P.sy - r1[0]
    if sex > 0.0:
        pd = _pow_n(sex / P.k, P.n)
        dg = 1.5 * (one_a * S.sdd - S.sdx) / g if g > 0.0 else 0.0
        dseq = P.bx * ((dg - P.hx) * one_a - (g - a * P.hx)) / (one_a * one_a)
        dr1 = P.br * (P.hr - S.r0) / ((1.0 + P.br * dp) * (1.0 + P.br * dp))
        dpd = (P.n / P.k) * _pow_n(sex / P.k, P.n - 1.0) * (dseq - dr1)
        f[0] = dp - S.dt * pd
        df[0] = 1.0 - S.dt * dpd
    else:
        f[0] = dp
        df[0] = 1.0
    return 0


cdef int _solve_dp(Pars* P, Scratch* S, double dp_est, double tol, int maxit,
                   Root* out) noexcept nogil:
    """Safeguarded Newton for the plastic increment. Returns 0 on success."""
    cdef double lo = 0.0
    cdef double hi = dp_est if dp_est > 1e-300 else 1e-300
    cdef double f = 0.0, df = 0.0, seq = 0.0, r1 = 0.0, dp, cand
    cdef int it = 0
    cdef bint step_ok

    while True:
        _f_df(P, S, hi, &f, &df, &seq, &r1)
        if f >= 0.0:
            break
        lo = hi
        hi *= 2.0
        it += 1
        if it > 200:
            return 1

    dp = 0.5 * (lo + hi)
    for it in range(maxit):
        _f_df(P, S, dp, &f, &df, &seq, &r1)
        if fabs(f) <= tol * (dp if dp > 1e-300 else 1e-300):
            out.dp = dp
            out.seq = seq
            out.r1 = r1
            return 0
        if f > 0.0:
            hi = dp
        else:
            lo = dp
        # bracket resolved to machine precision: rounding noise in the
        # over-stress dominates f, accept the midpoint
        if hi - lo <= 4e-16 * hi:
            dp = 0.5 * (lo + hi)
            _f_df(P, S, dp, &f, &df, &seq, &r1)
            out.dp = dp
            out.seq = seq
            out.r1 = r1
            return 0
        step_ok = df > 0.0
        if step_ok:
            cand = dp - f / df
            step_ok = lo < cand < hi
            if step_ok:
                dp = cand
        if not step_ok:
            dp = 0.5 * (lo + hi)
    return 1


cdef int _be_update(Pars* P, double* sig, double* state, double dt,
                    double tol, int maxit, double* out) noexcept nogil:
    """One backward-Euler step; state and out are 14-vectors."""
    cdef double sd[6]
    cdef double xi_t[6]
    cdef double mean, seq_t, sex_t, dp_est, a, denom, nd
    cdef Scratch S
    cdef Root root
    cdef int i

    mean = (sig[0] + sig[1] + sig[2]) / 3.0
    for i in range(6):
        sd[i] = sig[i]
    sd[0] -= mean
    sd[1] -= mean
    sd[2] -= mean

    seq_t = 0.0
    for i in range(6):
        xi_t[i] = sd[i] - state[7 + i]
        seq_t += xi_t[i] * xi_t[i]
    seq_t = sqrt(1.5 * seq_t)
    sex_t = seq_t - P.sy - state[6]
    if sex_t <= 0.0:
        for i in range(14):
            out[i] = state[i]
        return 0

    S.sdd = 0.0
    S.sdx = 0.0
    S.sxx = 0.0
    for i in range(6):
        S.sdd += sd[i] * sd[i]
        S.sdx += sd[i] * state[7 + i]
        S.sxx += state[7 + i] * state[7 + i]
    S.r0 = state[6]
    S.dt = dt

    dp_est = dt * _pow_n(sex_t / P.k, P.n)
    if _solve_dp(P, &S, dp_est, tol, maxit, &root) != 0:
        return 1
    if not root.seq > 0.0:
        return 1

    a = P.bx * root.dp
    denom = 1.0 + a + a * P.hx / root.seq
    for i in range(6):
        # xi = ((1+a)*sd - chi_old) / denom; flow direction 1.5*xi/seq
        nd = 1.5 * (((1.0 + a) * sd[i] - state[7 + i]) / denom) / root.seq
        out[i] = state[i] + root.dp * nd
        out[7 + i] = sd[i] - ((1.0 + a) * sd[i] - state[7 + i]) / denom
    out[6] = root.r1
    out[13] = state[13] + root.dp
    return 0


cdef int _advance(Pars* P, double* s0, double* s1, double* state, double dt,
                  double tol, int maxit, int depth, int max_bisect,
                  double* out) noexcept nogil:
    """Advance over dt with recursive bisection on Newton failure."""
    cdef double smid[6]
    cdef double tmp[14]
    cdef int i

    if _be_update(P, s1, state, dt, tol, maxit, out) == 0:
        return 0
    if depth >= max_bisect:
        return 1
    for i in range(6):
        smid[i] = 0.5 * (s0[i] + s1[i])
    if _advance(P, s0, smid, state, 0.5 * dt, tol, maxit, depth + 1, max_bisect, tmp) != 0:
        return 1
    return _advance(P, smid, s1, tmp, 0.5 * dt, tol, maxit, depth + 1, max_bisect, out)


cdef inline Pars _unpack_pars(double[::1] pars) noexcept nogil:
    cdef Pars P
    P.sy = pars[0]
    P.n = pars[1]
    P.k = pars[2]
    P.br = pars[3]
    P.hr = pars[4]
    P.bx = pars[5]
    P.hx = pars[6]
    return P


def step_once(pars, sig_end, state, double dt, double tol, int maxit):
    """Single implicit step without subdivision; raises NoConvergence."""
    cdef double[::1] p = np.ascontiguousarray(pars, dtype=np.float64)
    cdef double[::1] s = np.ascontiguousarray(sig_end, dtype=np.float64)
    cdef double[::1] x = np.ascontiguousarray(state, dtype=np.float64)
    out_arr = np.empty(14)
    cdef double[::1] out = out_arr
    cdef Pars P = _unpack_pars(p)
    cdef int rc
    with nogil:
        rc = _be_update(&P, &s[0], &x[0], dt, tol, maxit, &out[0])
    if rc != 0:
        raise NoConvergence(maxit)
    return out_arr


def integrate_path(pars, times, stress, state0, double tol, int maxit, int max_bisect):
    """Integrate the state along a sampled stress path (see _kernel_py)."""
    cdef double[::1] p = np.ascontiguousarray(pars, dtype=np.float64)
    cdef double[::1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef double[:, ::1] sig = np.ascontiguousarray(stress, dtype=np.float64)
    cdef double[::1] x0 = np.ascontiguousarray(state0, dtype=np.float64)
    cdef Py_ssize_t m = t.shape[0]

    evp_arr = np.empty((m, 6))
    r_arr = np.empty(m)
    chi_arr = np.empty((m, 6))
    p_arr = np.empty(m)
    cdef double[:, ::1] evp = evp_arr
    cdef double[::1] r = r_arr
    cdef double[:, ::1] chi = chi_arr
    cdef double[::1] pa = p_arr

    cdef Pars P = _unpack_pars(p)
    cdef double state[14]
    cdef double nxt[14]
    cdef Py_ssize_t i, j
    cdef int rc = 0

    with nogil:
        for j in range(14):
            state[j] = x0[j]
        for j in range(6):
            evp[0, j] = state[j]
            chi[0, j] = state[7 + j]
        r[0] = state[6]
        pa[0] = state[13]
        for i in range(m - 1):
            rc = _advance(&P, &sig[i, 0], &sig[i + 1, 0], state,
                          t[i + 1] - t[i], tol, maxit, 0, max_bisect, nxt)
            if rc != 0:
                break
            for j in range(14):
                state[j] = nxt[j]
            for j in range(6):
                evp[i + 1, j] = state[j]
                chi[i + 1, j] = state[7 + j]
            r[i + 1] = state[6]
            pa[i + 1] = state[13]
    if rc != 0:
        raise NoConvergence(maxit, f"step {i} failed after maximal subdivision")
    return evp_arr, r_arr, chi_arr, p_arr
