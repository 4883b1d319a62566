"""Binds the forward model and measurement data into a sampler target.

Uniform box priors over the five sampled constants, an iid Gaussian
likelihood under the declared observation noise, and posterior
summarization (moments, recovery errors, prior/posterior histograms).
"""

import csv
import json
import threading
from dataclasses import dataclass

import numpy as np

from . import forward, kernels
from .errors import ForwardFailure, NoConvergence
from .forward import PARAM_NAMES
from .tmcmc import TargetProblem

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class PriorBox:
    """Per-parameter uniform bounds for [kappa, shear, b_r, b_chi, sigma_y]."""

    lows: tuple
    highs: tuple

    def __post_init__(self):
        if len(self.lows) != 5 or len(self.highs) != 5:
            raise ValueError("bounds must cover the five sampled parameters")
        for name, lo, hi in zip(PARAM_NAMES, self.lows, self.highs):
            if not 0.0 < lo < hi:
                raise ValueError(f"{name}: need 0 < lower < upper")

    @classmethod
    def around(cls, q_true, rel_width=0.5):
        """Symmetric box, +-rel_width about a known truth."""
        q = q_true.as_array()
        return cls(
            lows=tuple(float(v) for v in q * (1.0 - rel_width)),
            highs=tuple(float(v) for v in q * (1.0 + rel_width)),
        )

    def arrays(self):
        return np.asarray(self.lows, dtype=float), np.asarray(self.highs, dtype=float)

    def log_density(self):
        lo, hi = self.arrays()
        return -float(np.sum(np.log(hi - lo)))


@dataclass(frozen=True)
class LikelihoodSpec:
    """Data plus the observation sigma used in the likelihood.

    `noise_sigma` may deliberately differ from the sigma that generated
    the data (misspecification studies); it defaults to the generating
    value recorded in the measurement set.
    """

    data: object
    noise_sigma: float = None

    def __post_init__(self):
        sigma = self.noise_sigma
        if sigma is None:
            object.__setattr__(self, "noise_sigma", float(self.data.sigma_effective))
            sigma = self.noise_sigma
        if not sigma > 0.0:
            raise ValueError("noise_sigma must be positive")


class ForwardLikelihood:
    """Gaussian log-likelihood of the displacement data; counts forward
    failures (mapped to -inf) for diagnostics."""

    def __init__(self, data_values, sigma, fixed, program, edge, sample_idx):
        self._d = np.asarray(data_values, dtype=float)
        self._sigma = float(sigma)
        self._fixed = fixed
        self._program = program
        self._edge = edge
        self._idx = np.asarray(sample_idx, dtype=int)
        times, stress = forward._stress_grid(program)
        self._times = times
        self._stress = stress
        diag = stress[self._idx, :3]
        self._tr = diag.sum(axis=1)
        self._dev = diag - self._tr[:, None] / 3.0
        n = self._d.shape[0]
        self._norm = -n * (np.log(self._sigma) + LOG_SQRT_2PI)
        self.failures = 0
        self._lock = threading.Lock()

    def predict(self, q):
        """Observation vector for a raw 5-array q."""
        kappa, shear, b_r, b_chi, sigma_y = (float(x) for x in q)
        pars = np.array(
            [
                sigma_y,
                self._fixed.n_exp,
                self._fixed.k_drag,
                b_r,
                self._fixed.h_r,
                b_chi,
                self._fixed.h_chi,
            ]
        )
        evp, _, _, _ = kernels.integrate_path(
            pars,
            self._times,
            self._stress,
            np.zeros(14),
            kernels.NEWTON_TOL,
            kernels.NEWTON_MAXIT,
            kernels.MAX_BISECT,
        )
        eps = (
            self._tr[:, None] / (9.0 * kappa)
            + self._dev / (2.0 * shear)
            + evp[self._idx, :3]
        )
        return (eps * self._edge).reshape(-1)

    def __call__(self, q):
        try:
            y = self.predict(q)
        except (NoConvergence, ForwardFailure):
            with self._lock:
                self.failures += 1
            return -np.inf
        resid = (self._d - y) / self._sigma
        return float(-0.5 * np.dot(resid, resid) + self._norm)


def build_problem(prior, lik, fixed, program, specimen):
    """Assemble the TargetProblem the sampler consumes.

    The returned evaluation functions own immutable copies of grid,
    data and configuration and are safe to call concurrently.
    """
    lo, hi = prior.arrays()
    log_const = prior.log_density()

    def log_prior(q):
        q = np.asarray(q, dtype=float)
        if np.all(q >= lo) and np.all(q <= hi):
            return log_const
        return -np.inf

    idx = forward.sample_indices(program, lik.data.sample_times)
    log_likelihood = ForwardLikelihood(
        lik.data.values,
        lik.noise_sigma,
        fixed,
        program,
        specimen.edge_length,
        idx,
    )
    return TargetProblem(
        log_prior=log_prior,
        log_likelihood=log_likelihood,
        dim=5,
        support=(lo, hi),
    )


def log_reparameterize(problem):
    """Transform hook: the same target over log-parameters.

    The prior density picks up the Jacobian sum(theta); the likelihood is
    composed with exp, so the maximum-likelihood point maps through log.
    """
    lo, hi = problem.support
    inner_prior = problem.log_prior
    inner_like = problem.log_likelihood

    def log_prior(t):
        return inner_prior(np.exp(t)) + float(np.sum(t))

    def log_likelihood(t):
        return inner_like(np.exp(t))

    return TargetProblem(
        log_prior=log_prior,
        log_likelihood=log_likelihood,
        dim=problem.dim,
        support=(np.log(lo), np.log(hi)),
    )


@dataclass
class PosteriorSummary:
    """Per-parameter recovery numbers plus prior/posterior histograms."""

    names: tuple
    truth: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    rel_error: np.ndarray
    std_over_mean: np.ndarray
    bin_edges: np.ndarray
    prior_counts: np.ndarray
    posterior_counts: np.ndarray
    log_evidence: float
    n_stages: int
    completed: bool

    def to_dict(self):
        log_ev = self.log_evidence
        doc = {
            # NaN (summaries of bare sample files) is not valid JSON
            "log_evidence": None if log_ev is None or np.isnan(log_ev) else float(log_ev),
            "n_stages": self.n_stages,
            "completed": self.completed,
            "parameters": {},
        }
        for i, name in enumerate(self.names):
            doc["parameters"][name] = {
                "truth": None if self.truth is None else float(self.truth[i]),
                "mean": float(self.mean[i]),
                "std": float(self.std[i]),
                "rel_error": None if self.truth is None else float(self.rel_error[i]),
                "std_over_mean": float(self.std_over_mean[i]),
                "bin_edges": [float(x) for x in self.bin_edges[i]],
                "prior_counts": [int(x) for x in self.prior_counts[i]],
                "posterior_counts": [int(x) for x in self.posterior_counts[i]],
            }
        return doc

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    def histograms_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["parameter", "bin_left", "bin_right", "prior_count", "posterior_count"])
            for i, name in enumerate(self.names):
                for b in range(len(self.prior_counts[i])):
                    w.writerow(
                        [
                            name,
                            repr(float(self.bin_edges[i][b])),
                            repr(float(self.bin_edges[i][b + 1])),
                            int(self.prior_counts[i][b]),
                            int(self.posterior_counts[i][b]),
                        ]
                    )


def summarize(result, truth=None, bins=40, prior_box=None, names=PARAM_NAMES):
    """Moments, recovery errors and comparable prior/posterior histograms.

    Histograms are binned over the prior box range so the prior and
    posterior panels share axes; without an explicit box the stage-0
    sample range is used.
    """
    samples = np.atleast_2d(result.samples)
    dim = samples.shape[1]
    if prior_box is not None:
        lo, hi = prior_box.arrays()
    else:
        first = np.atleast_2d(result.stages[0].samples)
        lo, hi = first.min(axis=0), first.max(axis=0)
        flat = hi <= lo
        hi = np.where(flat, lo + 1.0, hi)
    prior_samples = np.atleast_2d(result.stages[0].samples)

    mean = samples.mean(axis=0)
    std = samples.std(axis=0)
    truth_arr = None if truth is None else np.asarray(
        truth.as_array() if hasattr(truth, "as_array") else truth, dtype=float
    )
    rel = None if truth_arr is None else np.abs(mean - truth_arr) / np.abs(truth_arr)
    edges = np.empty((dim, bins + 1))
    prior_counts = np.empty((dim, bins), dtype=int)
    post_counts = np.empty((dim, bins), dtype=int)
    for i in range(dim):
        edges[i] = np.linspace(lo[i], hi[i], bins + 1)
        prior_counts[i], _ = np.histogram(prior_samples[:, i], bins=edges[i])
        post_counts[i], _ = np.histogram(samples[:, i], bins=edges[i])
    return PosteriorSummary(
        names=tuple(names)[:dim],
        truth=truth_arr,
        mean=mean,
        std=std,
        rel_error=rel,
        std_over_mean=std / np.abs(mean),
        bin_edges=edges,
        prior_counts=prior_counts,
        posterior_counts=post_counts,
        log_evidence=result.log_evidence,
        n_stages=len(result.stages),
        completed=result.completed,
    )
