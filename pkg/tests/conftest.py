from dataclasses import replace

import numpy as np
import pytest

from chabocal import kernels, material

try:  # optional acceleration for the fine-step oracle
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(f):
        return f


@pytest.fixture
def params():
    return material.reference_params()


def random_stress_program(rng, n_knots=6, duration=1.0, amplitude=3.5e8):
    """Random piecewise-linear Mandel stress path starting at zero."""
    knot_times = np.linspace(0.0, duration, n_knots)
    knots = rng.uniform(-amplitude, amplitude, size=(n_knots, 6))
    knots[0] = 0.0
    return knot_times, knots


def sample_stress(knot_times, knots, times):
    """Linear interpolation of a knot table onto a time grid."""
    out = np.empty((len(times), 6))
    for c in range(6):
        out[:, c] = np.interp(times, knot_times, knots[:, c])
    return out


def integrate_be(params, times, stress):
    """Production implicit integrator over a sampled path; final state."""
    evp, r, chi, p = kernels.integrate_path(
        params.kernel_array(),
        times,
        stress,
        np.zeros(14),
        kernels.NEWTON_TOL,
        kernels.NEWTON_MAXIT,
        kernels.MAX_BISECT,
    )
    return evp[-1], r[-1], chi[-1], p[-1]


@njit
def rk4_fine_oracle(kp, times, stress, substeps):
    """Test-owned explicit RK4 integrator, written independently of the
    package integrators.  Returns the packed 14-component final state."""
    sy, n, k, br, hr, bx, hx = kp[0], kp[1], kp[2], kp[3], kp[4], kp[5], kp[6]
    y = np.zeros(14)
    k1 = np.zeros(14)
    k2 = np.zeros(14)
    k3 = np.zeros(14)
    k4 = np.zeros(14)
    tmp = np.zeros(14)
    s = np.zeros(6)
    for i in range(len(times) - 1):
        h = (times[i + 1] - times[i]) / substeps
        for j in range(substeps):
            for stage in range(4):
                if stage == 0:
                    w = j / substeps
                    src = y
                    dst = k1
                elif stage == 1:
                    w = (j + 0.5) / substeps
                    for c in range(14):
                        tmp[c] = y[c] + 0.5 * h * k1[c]
                    src = tmp
                    dst = k2
                elif stage == 2:
                    w = (j + 0.5) / substeps
                    for c in range(14):
                        tmp[c] = y[c] + 0.5 * h * k2[c]
                    src = tmp
                    dst = k3
                else:
                    w = (j + 1.0) / substeps
                    for c in range(14):
                        tmp[c] = y[c] + h * k3[c]
                    src = tmp
                    dst = k4
                for c in range(6):
                    s[c] = stress[i, c] + (stress[i + 1, c] - stress[i, c]) * w
                m = (s[0] + s[1] + s[2]) / 3.0
                xi0 = s[0] - m - src[7]
                xi1 = s[1] - m - src[8]
                xi2 = s[2] - m - src[9]
                xi3 = s[3] - src[10]
                xi4 = s[4] - src[11]
                xi5 = s[5] - src[12]
                seq = np.sqrt(
                    1.5 * (xi0 * xi0 + xi1 * xi1 + xi2 * xi2 + xi3 * xi3 + xi4 * xi4 + xi5 * xi5)
                )
                sex = seq - sy - src[6]
                if sex <= 0.0:
                    for c in range(14):
                        dst[c] = 0.0
                else:
                    pd = (sex / k) ** n
                    cf = 1.5 / seq
                    nd0 = cf * xi0
                    nd1 = cf * xi1
                    nd2 = cf * xi2
                    nd3 = cf * xi3
                    nd4 = cf * xi4
                    nd5 = cf * xi5
                    dst[0] = pd * nd0
                    dst[1] = pd * nd1
                    dst[2] = pd * nd2
                    dst[3] = pd * nd3
                    dst[4] = pd * nd4
                    dst[5] = pd * nd5
                    dst[6] = br * (hr - src[6]) * pd
                    tw = 2.0 / 3.0 * hx
                    dst[7] = bx * (tw * nd0 - src[7]) * pd
                    dst[8] = bx * (tw * nd1 - src[8]) * pd
                    dst[9] = bx * (tw * nd2 - src[9]) * pd
                    dst[10] = bx * (tw * nd3 - src[10]) * pd
                    dst[11] = bx * (tw * nd4 - src[11]) * pd
                    dst[12] = bx * (tw * nd5 - src[12]) * pd
                    dst[13] = pd
            for c in range(14):
                y[c] = y[c] + (h / 6.0) * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
    return y


def oracle_equivalence_error(seed, n_base=2000, duration=2.0, refine=64):
    """One randomized-program comparison: implicit at dt/refine against the
    RK4 oracle at dt/1000.  Program peaks are rescaled to a fixed
    equivalent stress so every draw actually plastifies.

    Returns (max relative error over the state components, accumulated p).
    """
    pars = replace(material.reference_params(), b_r=8.0, b_chi=8.0)
    kp = pars.kernel_array()
    rng = np.random.default_rng(seed)
    kt = np.linspace(0.0, duration, 6)
    kv = rng.uniform(-1.0, 1.0, size=(6, 6))
    kv[0] = 0.0
    kv[-1] = 0.0

    base = np.linspace(0.0, duration, n_base + 1)
    sb = sample_stress(kt, kv, base)
    dev = sb.copy()
    m = sb[:, :3].sum(axis=1) / 3.0
    for c in range(3):
        dev[:, c] -= m
    seq_max = np.sqrt(1.5 * (dev * dev).sum(axis=1)).max()
    kv *= 2.8e8 / seq_max
    sb *= 2.8e8 / seq_max

    fine = np.linspace(0.0, duration, n_base * refine + 1)
    sf = sample_stress(kt, kv, fine)
    evp, r, chi, p = integrate_be(pars, fine, sf)
    y = rk4_fine_oracle(kp, base, sb, 1000)
    errs = (
        rel_diff(evp, y[0:6], 1e-12),
        rel_diff(r, y[6], 1e-3 * pars.h_r),
        rel_diff(chi, y[7:13], 1e-3 * pars.h_chi),
        rel_diff(p, y[13], 1e-12),
    )
    return max(errs), float(y[13])


def rel_diff(a, b, floor):
    """Norm of the difference relative to the reference norm (floored)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return float(np.linalg.norm(a - b)) / max(float(np.linalg.norm(b)), floor)
