"""Compare the compiled and pure-Python state-update kernels.

Runs the production hot path (full cyclic-test trajectory integration)
under both backends, checks numerical agreement, and reports throughput.

    python benchmarks/bench_kernel.py [--repeat N]
"""

import argparse
import time

import numpy as np

from chabocal import _kernel_py, forward, material
from chabocal.forward import FixedParams, ParameterVector, Specimen

try:
    from chabocal import _kernel
except ImportError:
    _kernel = None


def build_case():
    params = material.reference_params()
    q = ParameterVector(
        kappa=params.kappa,
        shear=params.shear,
        b_r=params.b_r,
        b_chi=params.b_chi,
        sigma_y=params.sigma_y,
    )
    program = forward.default_cyclic_program()
    times, stress = forward._stress_grid(program)
    return params.kernel_array(), times, stress


def run_backend(impl, kp, times, stress, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = impl.integrate_path(kp, times, stress, np.zeros(14), 1e-10, 50, 10)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    kp, times, stress = build_case()
    steps = len(times) - 1
    print(f"trajectory: {steps} implicit steps (cyclic program, dt = {times[1]:.3g} s)")

    t_py, out_py = run_backend(_kernel_py, kp, times, stress, max(1, args.repeat // 5))
    print(f"{'python':>9}: {t_py * 1e3:9.2f} ms/run  {steps / t_py:12.0f} steps/s")

    if _kernel is None:
        print("compiled backend not built; stopping after the fallback timing")
        return

    t_cy, out_cy = run_backend(_kernel, kp, times, stress, args.repeat)
    print(
        f"{'compiled':>9}: {t_cy * 1e3:9.2f} ms/run  {steps / t_cy:12.0f} steps/s"
        f"   speedup x{t_py / t_cy:.0f}"
    )

    worst = 0.0
    for a, b in zip(out_cy, out_py):
        a = np.asarray(a)
        b = np.asarray(b)
        scale = max(float(np.max(np.abs(b))), 1e-300)
        worst = max(worst, float(np.max(np.abs(a - b))) / scale)
    print(f"max relative disagreement between backends: {worst:.3e}")
    if worst > 1e-12:
        raise SystemExit("backends disagree beyond tolerance")


if __name__ == "__main__":
    main()
