"""Forward model: unit-cube virtual specimen under cyclic normal tractions.

One 8-node cube loaded by uniform normal tractions on opposite face pairs
and constrained only against rigid-body motion carries a spatially
homogeneous stress state equal to the applied tractions.  The forward
model is therefore a stress-driven material-point integration plus a
geometric scaling of strain to corner displacement -- exact for this
configuration, no stiffness-matrix solve involved.  A future multi-element
extension would generalize exactly here.
"""

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import ForwardFailure, NoConvergence, OutOfRange
from .material import MaterialParams

#: order of the sampled parameter vector
PARAM_NAMES = ("kappa", "shear", "b_r", "b_chi", "sigma_y")


@dataclass(frozen=True)
class LoadProgram:
    """Piecewise-linear traction program, periodically repeated.

    `knots` are (time, (tx, ty, tz)) pairs covering one cycle; tractions
    are interpolated linearly in between and the cycle repeats `cycles`
    times.  `dt` is the base integration step.
    """

    knots: tuple
    cycles: int = 1
    dt: float = 0.01

    def __post_init__(self):
        if len(self.knots) < 2:
            raise ValueError("need at least two knots")
        t0, v0 = self.knots[0]
        if t0 != 0.0:
            raise ValueError("first knot must be at t = 0")
        if any(v != 0.0 for v in v0):
            raise ValueError("first knot must carry zero traction")
        times = [k[0] for k in self.knots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("knot times must be strictly increasing")
        if self.cycles < 1 or int(self.cycles) != self.cycles:
            raise ValueError("cycles must be a positive integer")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")

    @property
    def period(self):
        return self.knots[-1][0]

    @property
    def duration(self):
        return self.period * self.cycles


def default_cyclic_program(peak=2.4e8, period=4.0, cycles=3, dt=0.01):
    """Staggered tension-compression triangles, one per axis.

    Axis i runs a full symmetric triangle (0 -> +peak -> -peak -> 0) of
    length period/2 starting at i*period/4, so the three axes peak at
    different times within each cycle.  The default peak of 2.4e8 Pa is a
    modeling choice (about 1.4x the reference yield stress, guaranteeing
    plastic flow), not measured data.
    """
    grid = [k * period / 8.0 for k in range(9)]

    def tri(t, start):
        s = t - start
        half = period / 2.0
        if s <= 0.0 or s >= half:
            return 0.0
        q = half / 4.0
        if s <= q:
            return s / q
        if s <= 3.0 * q:
            return (2.0 * q - s) / q
        return (s - 4.0 * q) / q

    knots = tuple(
        (t, tuple(peak * tri(t, i * period / 4.0) for i in range(3))) for t in grid
    )
    return LoadProgram(knots=knots, cycles=cycles, dt=dt)


@dataclass(frozen=True)
class Specimen:
    """Unit-cube specimen metadata for the homogeneous-state reduction.

    The six constrained scalar DOFs only eliminate rigid-body motion
    (corner B fully fixed; A_x, C_z, D_y fixed), which is what makes the
    homogeneous reduction exact.
    """

    edge_length: float = 1.0
    monitored_node: str = "E"
    constrained_dofs: tuple = ("B.x", "B.y", "B.z", "A.x", "C.z", "D.y")

    def __post_init__(self):
        if not self.edge_length > 0.0:
            raise ValueError("edge_length must be positive")
        if len(self.constrained_dofs) != 6:
            raise ValueError("exactly six scalar DOFs must be constrained")


@dataclass(frozen=True)
class FixedParams:
    """Constants held fixed during calibration."""

    n_exp: float = 1.0
    k_drag: float = 1.5e8
    h_r: float = 2.75e8
    h_chi: float = 2.75e8


@dataclass(frozen=True)
class ParameterVector:
    """The five sampled constants [kappa, shear, b_r, b_chi, sigma_y]."""

    kappa: float
    shear: float
    b_r: float
    b_chi: float
    sigma_y: float

    def __post_init__(self):
        for name in PARAM_NAMES:
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")

    def as_array(self):
        return np.array([self.kappa, self.shear, self.b_r, self.b_chi, self.sigma_y])

    @classmethod
    def from_array(cls, q):
        return cls(*(float(x) for x in q))


def combine_params(q, fixed):
    """Merge a ParameterVector with the fixed constants."""
    return MaterialParams(
        kappa=q.kappa,
        shear=q.shear,
        sigma_y=q.sigma_y,
        n_exp=fixed.n_exp,
        k_drag=fixed.k_drag,
        b_r=q.b_r,
        h_r=fixed.h_r,
        b_chi=q.b_chi,
        h_chi=fixed.h_chi,
    )


@dataclass
class Trajectory:
    """Displacement history of the monitored node, with state diagnostics."""

    times: np.ndarray
    displacements: np.ndarray
    r_iso: np.ndarray = None
    p_acc: np.ndarray = None
    chi: np.ndarray = None
    eps_vp: np.ndarray = None

    def __post_init__(self):
        if len(self.times) != len(self.displacements):
            raise ValueError("times and displacements must have equal length")

    def to_csv(self, path, include_state=True):
        """Write time, ux, uy, uz (+ state columns); header mandatory."""
        header = ["time", "ux", "uy", "uz"]
        state_cols = include_state and self.r_iso is not None
        if state_cols:
            header += ["R", "p", "chi_11", "chi_22", "chi_33", "chi_23", "chi_13", "chi_12"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i, t in enumerate(self.times):
                row = [repr(float(t))] + [repr(float(x)) for x in self.displacements[i]]
                if state_cols:
                    row.append(repr(float(self.r_iso[i])))
                    row.append(repr(float(self.p_acc[i])))
                    row += [repr(float(x)) for x in self.chi[i]]
                w.writerow(row)


@lru_cache(maxsize=16)
def _knot_table(program):
    times = np.array([k[0] for k in program.knots])
    vals = np.array([k[1] for k in program.knots])
    return times, vals


def traction_at(program, t):
    """Applied traction 3-vector at time t (periodic across cycles).

    Cycle boundaries map to the last knot, so knot times always return
    their knot values even for programs that do not end at zero.
    """
    total = program.duration
    if t < 0.0 or t > total * (1.0 + 1e-12):
        raise OutOfRange(f"t={t} outside [0, {total}]")
    tau = math.fmod(t, program.period)
    if tau == 0.0 and t > 0.0:
        tau = program.period
    tk, vals = _knot_table(program)
    return np.array([np.interp(tau, tk, vals[:, i]) for i in range(3)])


@lru_cache(maxsize=16)
def _stress_grid(program):
    """Time grid at every dt and the Mandel stress at each grid point."""
    n = program.duration / program.dt
    n_steps = int(round(n))
    if abs(n - n_steps) > 1e-9 * max(n, 1.0):
        raise ValueError("program duration must be an integer multiple of dt")
    times = np.arange(n_steps + 1) * program.dt
    stress = np.zeros((n_steps + 1, 6))
    for i, t in enumerate(times):
        stress[i, :3] = traction_at(program, min(t, program.duration))
    return times, stress


def sample_indices(program, sample_times):
    """Grid indices of the requested observation times (must lie on grid)."""
    times, _ = _stress_grid(program)
    idx = np.rint(np.asarray(sample_times, dtype=float) / program.dt).astype(int)
    if np.any(idx < 0) or np.any(idx >= len(times)):
        raise OutOfRange("sample time outside the simulated window")
    if not np.allclose(times[idx], sample_times, rtol=0.0, atol=1e-9 * program.dt):
        raise ValueError("sample times must coincide with trajectory times")
    return idx


def _displacement_history(q, fixed, program, edge):
    """Node-E displacement per grid point plus raw state histories."""
    params = combine_params(q, fixed)
    times, stress = _stress_grid(program)
    try:
        evp, r, chi, p = kernels.integrate_path(
            params.kernel_array(),
            times,
            stress,
            np.zeros(14),
            kernels.NEWTON_TOL,
            kernels.NEWTON_MAXIT,
            kernels.MAX_BISECT,
        )
    except NoConvergence as exc:
        raise ForwardFailure(f"constitutive update failed: {exc}") from exc
    diag = stress[:, :3]
    tr = diag.sum(axis=1)
    dev = diag - tr[:, None] / 3.0
    eps = tr[:, None] / (9.0 * params.kappa) + dev / (2.0 * params.shear) + evp[:, :3]
    return times, eps * edge, r, p, chi, evp


def run_forward(q, fixed, program, specimen):
    """Simulate the full displacement trajectory of the monitored node."""
    times, u, r, p, chi, evp = _displacement_history(
        q, fixed, program, specimen.edge_length
    )
    return Trajectory(
        times=times, displacements=u, r_iso=r, p_acc=p, chi=chi, eps_vp=evp
    )


def measurement_operator(q, fixed, program, specimen, sample_times):
    """Predicted observation vector: (ux, uy, uz) stacked per sample time."""
    idx = sample_indices(program, sample_times)
    _, u, *_ = _displacement_history(q, fixed, program, specimen.edge_length)
    return u[idx].reshape(-1)
