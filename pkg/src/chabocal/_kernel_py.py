"""Pure-NumPy state-update kernel, the fallback twin of the compiled core.

Implements the implicit (backward Euler) update of the viscoplastic state
under a prescribed stress path.  Given the plastic increment dp, the
hardening updates are closed-form, so the implicit system reduces to one
scalar equation

    F(dp) = dp - dt * < (seq(dp) - sigma_y - R(dp)) / k >^n = 0

with seq obtained from the algebraic elimination of the back-stress:
xi = [(1+a)*dev(sigma) - chi_old] / (1 + a + a*h_chi/seq), a = b_chi*dp.
A safeguarded Newton iteration (bracketing + bisection fallback) solves
F; all backward-Euler residuals are then satisfied by construction.
"""

import numpy as np

from .errors import NoConvergence

BACKEND = "python"


def _solve_dp(sy, n, k, br, hr, bx, hx, sdd, sdx, sxx, r0, dt, dp_est, tol, maxit):
    """Solve F(dp)=0 on the inelastic branch. Returns (dp, seq, r1)."""

    def f_df(dp):
        a = bx * dp
        one_a = 1.0 + a
        g2 = 1.5 * (one_a * one_a * sdd - 2.0 * one_a * sdx + sxx)
        g = np.sqrt(g2) if g2 > 0.0 else 0.0
        seq = (g - a * hx) / one_a
        r1 = (r0 + br * hr * dp) / (1.0 + br * dp)
        sex = seq - sy - r1
        if sex > 0.0:
            pd = (sex / k) ** n
            dg = 1.5 * (one_a * sdd - sdx) / g if g > 0.0 else 0.0
            dseq = bx * ((dg - hx) * one_a - (g - a * hx)) / (one_a * one_a)
            dr1 = br * (hr - r0) / (1.0 + br * dp) ** 2
            dpd = (n / k) * (sex / k) ** (n - 1.0) * (dseq - dr1)
            return dp - dt * pd, 1.0 - dt * dpd, seq, r1
        return dp, 1.0, seq, r1

    # bracket: F(0) < 0 on this branch, F grows unboundedly with dp
    lo = 0.0
    hi = max(dp_est, 1e-300)
    it = 0
    while True:
        fhi = f_df(hi)[0]
        if fhi >= 0.0:
            break
        lo = hi
        hi *= 2.0
        it += 1
        if it > 200:
            raise NoConvergence(it, "failed to bracket the plastic increment")

    dp = 0.5 * (lo + hi)
    for it in range(maxit):
        f, df, seq, r1 = f_df(dp)
        if abs(f) <= tol * max(dp, 1e-300):
            return dp, seq, r1
        if f > 0.0:
            hi = dp
        else:
            lo = dp
        # bracket resolved to machine precision: rounding noise in the
        # over-stress dominates f, accept the midpoint
        if hi - lo <= 4e-16 * hi:
            dp = 0.5 * (lo + hi)
            _, _, seq, r1 = f_df(dp)
            return dp, seq, r1
        step_ok = df > 0.0
        if step_ok:
            cand = dp - f / df
            step_ok = lo < cand < hi
        dp = cand if step_ok else 0.5 * (lo + hi)
    raise NoConvergence(maxit)


def _be_update(kp, sig6, state, dt, tol, maxit):
    """One backward-Euler step; mutates nothing, returns the new 14-vector."""
    sy, n, k, br, hr, bx, hx = kp
    mean = (sig6[0] + sig6[1] + sig6[2]) / 3.0
    sd = sig6.copy()
    sd[:3] -= mean
    x0 = state[7:13]
    xi_t = sd - x0
    seq_t = np.sqrt(1.5 * float(np.dot(xi_t, xi_t)))
    r0 = state[6]
    sex_t = seq_t - sy - r0
    if sex_t <= 0.0:
        return state.copy()

    sdd = float(np.dot(sd, sd))
    sdx = float(np.dot(sd, x0))
    sxx = float(np.dot(x0, x0))
    dp_est = dt * (sex_t / k) ** n
    dp, seq, r1 = _solve_dp(
        sy, n, k, br, hr, bx, hx, sdd, sdx, sxx, r0, dt, dp_est, tol, maxit
    )
    if not seq > 0.0:
        raise NoConvergence(maxit, "equivalent stress collapsed during the solve")

    a = bx * dp
    denom = 1.0 + a + a * hx / seq
    xi = ((1.0 + a) * sd - x0) / denom
    n_dir = 1.5 * xi / seq
    out = np.empty(14)
    out[0:6] = state[0:6] + dp * n_dir
    out[6] = r1
    out[7:13] = sd - xi
    out[13] = state[13] + dp
    return out


def _advance(kp, s0, s1, state, dt, tol, maxit, depth, max_bisect):
    """Advance over dt with recursive bisection on Newton failure."""
    try:
        return _be_update(kp, s1, state, dt, tol, maxit)
    except NoConvergence:
        if depth >= max_bisect:
            raise
    smid = 0.5 * (s0 + s1)
    half = 0.5 * dt
    state = _advance(kp, s0, smid, state, half, tol, maxit, depth + 1, max_bisect)
    return _advance(kp, smid, s1, state, half, tol, maxit, depth + 1, max_bisect)


def step_once(pars, sig_end, state, dt, tol, maxit):
    """Single implicit step without subdivision; raises NoConvergence."""
    kp = tuple(float(x) for x in pars)
    return _be_update(kp, np.asarray(sig_end, dtype=float), np.asarray(state, dtype=float), dt, tol, maxit)


def integrate_path(pars, times, stress, state0, tol, maxit, max_bisect):
    """Integrate the state along a sampled stress path.

    Parameters are the 7-vector of flow/hardening constants, `times` a
    strictly increasing grid, `stress` the (M, 6) Mandel stress at each
    grid point (interpolated linearly inside failing steps).  Returns the
    per-point viscoplastic strain, isotropic hardening, back-stress and
    accumulated plastic strain histories.
    """
    kp = tuple(float(x) for x in pars)
    times = np.asarray(times, dtype=float)
    stress = np.asarray(stress, dtype=float)
    m = times.shape[0]
    evp = np.empty((m, 6))
    r = np.empty(m)
    chi = np.empty((m, 6))
    p = np.empty(m)

    state = np.asarray(state0, dtype=float).copy()
    evp[0] = state[0:6]
    r[0] = state[6]
    chi[0] = state[7:13]
    p[0] = state[13]
    for i in range(m - 1):
        dt = times[i + 1] - times[i]
        state = _advance(
            kp, stress[i], stress[i + 1], state, dt, tol, maxit, 0, max_bisect
        )
        evp[i + 1] = state[0:6]
        r[i + 1] = state[6]
        chi[i + 1] = state[7:13]
        p[i + 1] = state[13]
    return evp, r, chi, p
