"""Chaboche-type viscoplastic material point with mixed hardening.

The model combines isotropic homogeneous elasticity (bulk/shear split),
a Macaulay power-law over-stress flow rule and saturating isotropic plus
kinematic hardening.  State evolution under a prescribed stress history is
integrated with an implicit (backward Euler) update; an explicit RK4
reference integrator is provided as an independent cross-check.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels, tensors
from .errors import SingularDirection

#: equivalent stress (Pa) below which the flow direction is undefined
SEQ_SINGULAR_TOL = 1e-6


@dataclass(frozen=True)
class MaterialParams:
    """The nine material constants, SI units (Pa, s).

    Attributes
    ----------
    kappa : bulk modulus [Pa]
    shear : shear modulus [Pa]
    sigma_y : initial yield stress [Pa]
    n_exp : flow-rule exponent [-]
    k_drag : flow-rule drag stress [Pa]
    b_r : isotropic hardening saturation speed [-]
    h_r : isotropic hardening asymptote [Pa]
    b_chi : kinematic hardening saturation speed [-]
    h_chi : kinematic hardening asymptote [Pa]
    """

    kappa: float
    shear: float
    sigma_y: float
    n_exp: float
    k_drag: float
    b_r: float
    h_r: float
    b_chi: float
    h_chi: float

    def __post_init__(self):
        for name in ("kappa", "shear", "sigma_y", "k_drag"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.n_exp < 1.0:
            raise ValueError("n_exp must be >= 1")
        for name in ("b_r", "b_chi", "h_r", "h_chi"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def young(self):
        """Young's modulus derived from the (kappa, shear) pair."""
        return 9.0 * self.kappa * self.shear / (3.0 * self.kappa + self.shear)

    @property
    def poisson(self):
        return (3.0 * self.kappa - 2.0 * self.shear) / (
            2.0 * (3.0 * self.kappa + self.shear)
        )

    def kernel_array(self):
        """Constants consumed by the state-update kernels."""
        return np.array(
            [
                self.sigma_y,
                self.n_exp,
                self.k_drag,
                self.b_r,
                self.h_r,
                self.b_chi,
                self.h_chi,
            ]
        )


def _zero6():
    return np.zeros(6)


@dataclass(frozen=True)
class InternalState:
    """Material-point state; tensors held as Mandel 6-vectors.

    All fields vanish at t=0.  `p_acc` is non-decreasing along any
    integrated trajectory and `chi` stays deviatoric by construction.
    """

    eps_vp: np.ndarray = field(default_factory=_zero6)
    r_iso: float = 0.0
    chi: np.ndarray = field(default_factory=_zero6)
    p_acc: float = 0.0

    @classmethod
    def zero(cls):
        return cls()

    def pack(self):
        """Flatten into the 14-component kernel layout."""
        out = np.empty(14)
        out[0:6] = self.eps_vp
        out[6] = self.r_iso
        out[7:13] = self.chi
        out[13] = self.p_acc
        return out

    @classmethod
    def unpack(cls, v):
        return cls(
            eps_vp=np.array(v[0:6]),
            r_iso=float(v[6]),
            chi=np.array(v[7:13]),
            p_acc=float(v[13]),
        )

    @property
    def eps_vp_tensor(self):
        return tensors.from_mandel(self.eps_vp)

    @property
    def chi_tensor(self):
        return tensors.from_mandel(self.chi)


def elasticity_apply(params, eps_e):
    """Isotropic Hooke stress for an elastic strain (3x3, symmetric).

    sigma = kappa*tr(eps)*I + 2G*dev(eps): eigenvalues 3*kappa and 2G on
    the volumetric and deviatoric subspaces.
    """
    eps_e = np.asarray(eps_e, dtype=float)
    tr = np.trace(eps_e)
    dev = eps_e - (tr / 3.0) * np.eye(3)
    return params.kappa * tr * np.eye(3) + 2.0 * params.shear * dev


def elastic_strain(params, sigma):
    """Inverse of `elasticity_apply`."""
    sigma = np.asarray(sigma, dtype=float)
    tr = np.trace(sigma)
    dev = sigma - (tr / 3.0) * np.eye(3)
    return tr / (9.0 * params.kappa) * np.eye(3) + dev / (2.0 * params.shear)


def equivalent_stress(sigma, chi=None):
    """Von Mises norm of the deviatoric part of sigma - chi (both 3x3)."""
    eff = np.asarray(sigma, dtype=float)
    if chi is not None:
        eff = eff - np.asarray(chi, dtype=float)
    dev = eff - (np.trace(eff) / 3.0) * np.eye(3)
    return float(np.sqrt(1.5 * np.tensordot(dev, dev)))


def over_stress(params, sigma, state):
    """Excess of the equivalent stress over the current yield radius.

    May be negative; callers apply the Macaulay bracket.
    """
    seq = equivalent_stress(sigma, tensors.from_mandel(state.chi))
    return seq - params.sigma_y - state.r_iso


def flow_direction(sigma, chi):
    """Normalized plastic flow direction (3/2)(sigma-chi)_D / sigma_eq.

    The stress derivatives of the equivalent stress and of the over-stress
    coincide (the yield radius does not depend on stress), so this one
    direction serves both the flow rule and the kinematic hardening
    evolution.  Deviatoric with unit von Mises norm.  Raises
    `SingularDirection` when the equivalent stress falls below the apex
    tolerance.
    """
    eff = np.asarray(sigma, dtype=float) - np.asarray(chi, dtype=float)
    dev = eff - (np.trace(eff) / 3.0) * np.eye(3)
    seq = float(np.sqrt(1.5 * np.tensordot(dev, dev)))
    if seq <= SEQ_SINGULAR_TOL:
        raise SingularDirection(f"equivalent stress {seq:g} Pa below tolerance")
    return 1.5 * dev / seq


def plastic_multiplier_rate(params, sigma, state):
    """Macaulay power law <sigma_ex/k>^n; zero in the elastic regime."""
    sex = over_stress(params, sigma, state)
    if sex <= 0.0:
        return 0.0
    return float((sex / params.k_drag) ** params.n_exp)


def dissipation_potential(params, sigma, state):
    """Diagnostic scalar (k/(n+1)) <sigma_ex/k>^(n+1) generating the flow rule."""
    sex = over_stress(params, sigma, state)
    if sex <= 0.0:
        return 0.0
    n = params.n_exp
    return float(params.k_drag / (n + 1.0) * (sex / params.k_drag) ** (n + 1.0))


def state_rates(params, sigma, state):
    """Evolution rates (eps_vp_dot, R_dot, chi_dot, p_dot) at fixed stress.

    All rates vanish when the plastic multiplier rate is zero, so the
    direction singularity can only be hit with p_dot > 0, which the
    over-stress structure rules out.
    """
    p_dot = plastic_multiplier_rate(params, sigma, state)
    if p_dot == 0.0:
        return np.zeros((3, 3)), 0.0, np.zeros((3, 3)), 0.0
    n_dir = flow_direction(sigma, tensors.from_mandel(state.chi))
    evp_dot = p_dot * n_dir
    r_dot = params.b_r * (params.h_r - state.r_iso) * p_dot
    chi_dot = (
        params.b_chi
        * ((2.0 / 3.0) * params.h_chi * n_dir - tensors.from_mandel(state.chi))
        * p_dot
    )
    return evp_dot, r_dot, chi_dot, p_dot


def integrate_step(params, sigma_start, sigma_end, state, dt):
    """Advance the state over one implicit step of size dt.

    The backward-Euler update evaluates all rates at (sigma_end, new
    state); sigma_start only matters to callers that subdivide on
    `NoConvergence` (stress is interpolated linearly inside the step).
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    sig6 = tensors.to_mandel(sigma_end)
    new = kernels.step_once(
        params.kernel_array(),
        sig6,
        state.pack(),
        dt,
        kernels.NEWTON_TOL,
        kernels.NEWTON_MAXIT,
    )
    return InternalState.unpack(new)


def _rates_mandel(kp, sig6, evp, r, chi, p):
    """state_rates in Mandel components, for the RK4 reference integrator."""
    sy, n, k, br, hr, bx, hx = kp
    sd = tensors.deviator(sig6)
    xi = sd - chi
    seq = np.sqrt(1.5 * np.dot(xi, xi))
    sex = seq - sy - r
    if sex <= 0.0:
        return np.zeros(6), 0.0, np.zeros(6), 0.0
    p_dot = (sex / k) ** n
    n_dir = 1.5 * xi / seq
    return (
        p_dot * n_dir,
        br * (hr - r) * p_dot,
        bx * ((2.0 / 3.0) * hx * n_dir - chi) * p_dot,
        p_dot,
    )


def integrate_rk4(params, sigma_start, sigma_end, state, dt, substeps=1):
    """Explicit RK4 reference over [0, dt] with linearly interpolated stress.

    Independent of the implicit production path; used as the fine-step
    oracle in tests (substeps >> 1).
    """
    kp = params.kernel_array()
    s0 = tensors.to_mandel(sigma_start)
    s1 = tensors.to_mandel(sigma_end)
    evp = np.array(state.eps_vp)
    r = state.r_iso
    chi = np.array(state.chi)
    p = state.p_acc
    h = dt / substeps

    def sig_at(t):
        w = t / dt
        return (1.0 - w) * s0 + w * s1

    for i in range(substeps):
        t = i * h
        k1 = _rates_mandel(kp, sig_at(t), evp, r, chi, p)
        k2 = _rates_mandel(
            kp,
            sig_at(t + 0.5 * h),
            evp + 0.5 * h * k1[0],
            r + 0.5 * h * k1[1],
            chi + 0.5 * h * k1[2],
            p + 0.5 * h * k1[3],
        )
        k3 = _rates_mandel(
            kp,
            sig_at(t + 0.5 * h),
            evp + 0.5 * h * k2[0],
            r + 0.5 * h * k2[1],
            chi + 0.5 * h * k2[2],
            p + 0.5 * h * k2[3],
        )
        k4 = _rates_mandel(
            kp,
            sig_at(t + h),
            evp + h * k3[0],
            r + h * k3[1],
            chi + h * k3[2],
            p + h * k3[3],
        )
        evp = evp + (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        r = r + (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        chi = chi + (h / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        p = p + (h / 6.0) * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])

    return InternalState(eps_vp=evp, r_iso=r, chi=chi, p_acc=p)


def backward_euler_residuals(params, sigma_end, state_old, state_new, dt):
    """Residual norms of the implicit update equations, for verification.

    Returns the max over the four evolution equations of the residual
    scaled by the magnitude of its own increment/rate terms.
    """
    kp = params.kernel_array()
    sig6 = tensors.to_mandel(sigma_end)
    rates = _rates_mandel(
        kp, sig6, state_new.eps_vp, state_new.r_iso, state_new.chi, state_new.p_acc
    )
    res = []
    pairs = (
        (state_new.eps_vp - state_old.eps_vp, rates[0]),
        (state_new.r_iso - state_old.r_iso, rates[1]),
        (state_new.chi - state_old.chi, rates[2]),
        (state_new.p_acc - state_old.p_acc, rates[3]),
    )
    for delta, rate in pairs:
        r = np.atleast_1d(delta - dt * np.asarray(rate))
        scale = max(
            float(np.linalg.norm(np.atleast_1d(delta))),
            dt * float(np.linalg.norm(np.atleast_1d(rate))),
        )
        res.append(float(np.linalg.norm(r)) / scale if scale > 0.0 else 0.0)
    return max(res)


def reference_params():
    """Steel-like reference constants used by the demo configs and tests."""
    return MaterialParams(
        kappa=1.66e9,
        shear=7.69e8,
        sigma_y=1.7e8,
        n_exp=1.0,
        k_drag=1.5e8,
        b_r=50.0,
        h_r=2.75e8,
        b_chi=50.0,
        h_chi=2.75e8,
    )
