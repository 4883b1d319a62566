"""Transitional MCMC: sequential tempering from prior to posterior.

The sampler walks a sequence of intermediate densities

    f_j(theta) ~ prior(theta) * likelihood(theta)^r_j,   0 = r_0 <= ... <= r_M = 1

choosing each exponent increment so the coefficient of variation of the
incremental importance weights hits a prescribed target, resampling
proportionally to those weights, and refreshing every particle with its
own Metropolis-Hastings chain under a scaled weighted-covariance Gaussian
proposal.  The per-stage weight means multiply up to the model evidence.

All weight arithmetic is done in log space with max-subtraction; the
likelihood is only ever touched through its log.  Every chain draws from
its own seed-derived stream, so results are independent of worker count.
"""

import csv
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    ChainStallWarning,
    DegenerateWeights,
    PriorUnsamplable,
    RankDeficient,
    StageLimitExceeded,
)

#: random-walk acceptance rate the proposal scale is steered towards
OPTIMAL_ACCEPTANCE = 0.234


@dataclass
class TargetProblem:
    """A Bayesian target: log densities plus a box support.

    `log_prior` must be finite inside the support and -inf outside.
    Initial samples are uniform over the box unless `prior_ppf` is given,
    which maps (n, dim) uniforms through the prior's inverse CDF.
    """

    log_prior: callable
    log_likelihood: callable
    dim: int
    support: tuple
    prior_ppf: callable = None

    def __post_init__(self):
        lo, hi = (np.asarray(b, dtype=float) for b in self.support)
        if lo.shape != (self.dim,) or hi.shape != (self.dim,):
            raise ValueError("support bounds must match dim")
        if np.any(hi <= lo):
            raise ValueError("support box must have positive widths")
        self.support = (lo, hi)


@dataclass
class TmcmcConfig:
    n_samples: int
    cov_target: float = 1.0
    beta_scale: float = 0.2
    burn_in: int = 200
    burn_in_final: int = 500
    accept_lo: float = 0.2
    accept_hi: float = 0.3
    max_stages: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if not 0.0 < self.accept_lo < self.accept_hi < 1.0:
            raise ValueError("need 0 < accept_lo < accept_hi < 1")
        if not self.cov_target > 0.0:
            raise ValueError("cov_target must be positive")
        if not self.beta_scale > 0.0:
            raise ValueError("beta_scale must be positive")
        if self.burn_in < 0 or self.burn_in_final < 0:
            raise ValueError("burn-in must be non-negative")
        if self.max_stages < 1:
            raise ValueError("max_stages must be positive")


@dataclass
class TmcmcStage:
    """One stage of the sampler plus the transition data computed from it."""

    index: int
    exponent: float
    samples: np.ndarray
    log_likes: np.ndarray
    weights: np.ndarray = None
    log_increment: float = None
    proposal_cov: np.ndarray = None
    acceptance_rate: float = None
    beta: float = None
    ess: float = None
    stalled_chains: int = 0


@dataclass
class PosteriorResult:
    samples: np.ndarray
    log_evidence: float
    stages: list
    mean: np.ndarray
    std: np.ndarray
    completed: bool = True


def _stream(seed, *key):
    """Independent generator for a (stage, chain) slot under one seed."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _pmap(fn, items, executor):
    if executor is None:
        return [fn(x) for x in items]
    return list(executor.map(fn, items))


def init_stage(problem, config, executor=None):
    """Stage 0: iid prior draws with cached log-likelihoods."""
    rng = _stream(config.seed, 0, 0)
    lo, hi = problem.support
    n, d = config.n_samples, problem.dim
    samples = np.empty((n, d))
    filled = 0
    for _ in range(100):
        u = rng.uniform(size=(n, d))
        cand = problem.prior_ppf(u) if problem.prior_ppf else lo + u * (hi - lo)
        ok = np.isfinite([problem.log_prior(c) for c in cand])
        take = min(int(ok.sum()), n - filled)
        samples[filled : filled + take] = cand[ok][:take]
        filled += take
        if filled == n:
            break
    else:
        raise PriorUnsamplable("support predicate rejected all draws")
    log_likes = np.array(_pmap(problem.log_likelihood, list(samples), executor), dtype=float)
    return TmcmcStage(index=0, exponent=0.0, samples=samples, log_likes=log_likes)


def _weight_cov(log_likes, delta):
    """Coefficient of variation of exp(delta * log_likes), shift-invariant."""
    shifted = delta * (log_likes - log_likes.max())
    w = np.exp(shifted)
    m = w.mean()
    return float(np.sqrt(np.mean((w - m) ** 2)) / m)


def next_exponent(stage, config):
    """Largest admissible exponent: CoV of the incremental weights hits
    the target, found by bisection; clamps to 1 when the full remaining
    step already satisfies it."""
    ll = stage.log_likes
    finite = ll[np.isfinite(ll)]
    if finite.size == 0:
        raise DegenerateWeights("all log-likelihoods are -inf")
    remaining = 1.0 - stage.exponent
    if finite.max() == finite.min() and finite.size == ll.size:
        return 1.0
    if _weight_cov(ll, remaining) <= config.cov_target:
        return 1.0
    lo, hi = 0.0, remaining
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if _weight_cov(ll, mid) <= config.cov_target:
            lo = mid
        else:
            hi = mid
    r_next = stage.exponent + lo
    if not r_next > stage.exponent:
        raise DegenerateWeights("tempering increment underflowed")
    return r_next


def plausibility_weights(stage, r_next):
    """Normalized incremental weights and the exact log of their mean."""
    delta = r_next - stage.exponent
    if not delta > 0.0:
        raise ValueError("r_next must exceed the current exponent")
    lw = delta * stage.log_likes
    m = float(np.max(lw))
    if not np.isfinite(m):
        raise DegenerateWeights("all log-likelihoods are -inf")
    w = np.exp(lw - m)
    log_s = m + float(np.log(np.mean(w)))
    return w / w.sum(), log_s


def proposal_covariance(stage, weights, beta):
    """Scaled weighted sample covariance of the current particles.

    Invariant under uniform weight rescaling; a relative diagonal jitter
    of 1e-12*trace/dim is added before any factorization downstream.
    """
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    mu = w @ stage.samples
    d = stage.samples - mu
    cov = beta * beta * (d.T * w) @ d
    cov = 0.5 * (cov + cov.T)
    jitter = 1e-12 * np.trace(cov) / stage.samples.shape[1]
    return cov + jitter * np.eye(stage.samples.shape[1])


def adapt_beta(current_beta, realized_acceptance, config):
    """Steer the proposal scale back into the target acceptance band."""
    if realized_acceptance < config.accept_lo:
        new = current_beta * max(0.5, realized_acceptance / OPTIMAL_ACCEPTANCE)
    elif realized_acceptance > config.accept_hi:
        new = current_beta * min(2.0, realized_acceptance / OPTIMAL_ACCEPTANCE)
    else:
        new = current_beta
    return float(min(max(new, 1e-3), 1.0))


def _tempered(lp, ll, r):
    # 0 * (-inf) would be nan; exponent zero means the prior alone
    return lp if r == 0.0 else lp + r * ll


def _run_chain(theta, ll, steps, chol, r, problem, rng):
    """One Metropolis-Hastings chain; returns its final state."""
    d = theta.shape[0]
    lp = problem.log_prior(theta)
    post = _tempered(lp, ll, r)
    accepts = 0
    for _ in range(steps):
        prop = theta + chol @ rng.standard_normal(d)
        lp_p = problem.log_prior(prop)
        if lp_p == -np.inf:
            continue
        ll_p = problem.log_likelihood(prop)
        post_p = _tempered(lp_p, ll_p, r)
        if np.log(rng.uniform()) < post_p - post:
            theta, ll, post = prop, ll_p, post_p
            accepts += 1
    return theta, ll, accepts


def resample_and_propagate(stage, r_next, weights, cov, problem, config, executor=None, beta=None):
    """Plausibility-weighted restart points, one MH chain per particle.

    Each of the N chains runs burn_in + 1 steps (burn_in_final + 1 at the
    final stage) and contributes its last state, giving exactly N samples
    of the next tempered density.
    """
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("proposal covariance not factorizable") from exc

    n = stage.samples.shape[0]
    j_next = stage.index + 1
    rng = _stream(config.seed, j_next, 0)
    w = np.asarray(weights, dtype=float)
    starts = rng.choice(n, size=n, p=w / w.sum())

    burn = config.burn_in_final if r_next >= 1.0 else config.burn_in
    steps = burn + 1

    def one(k):
        chain_rng = _stream(config.seed, j_next, 1 + k)
        return _run_chain(
            stage.samples[starts[k]].copy(),
            stage.log_likes[starts[k]],
            steps,
            chol,
            r_next,
            problem,
            chain_rng,
        )

    results = _pmap(one, range(n), executor)
    samples = np.array([r[0] for r in results])
    log_likes = np.array([r[1] for r in results])
    accepts = sum(r[2] for r in results)
    stalled = sum(1 for r in results if r[2] == 0)
    if stalled and steps >= 10:
        warnings.warn(
            f"{stalled} of {n} chains accepted nothing in stage {j_next}",
            ChainStallWarning,
        )
    return TmcmcStage(
        index=j_next,
        exponent=r_next,
        samples=samples,
        log_likes=log_likes,
        acceptance_rate=accepts / (n * steps),
        beta=beta,
        stalled_chains=stalled,
    )


def _stage_record(stage):
    return {
        "j": stage.index,
        "r": stage.exponent,
        "log_S": stage.log_increment,
        "acceptance_rate": stage.acceptance_rate,
        "beta": stage.beta,
        "ess": stage.ess,
    }


def run(problem, config, threads=1, on_stage=None):
    """Iterate tempering stages until the exponent reaches 1.

    Deterministic for a given seed regardless of `threads`.  `on_stage`
    receives one diagnostic dict per stage as it completes.  Raises
    `StageLimitExceeded` (carrying the partial result) when `max_stages`
    transitions did not reach exponent 1.
    """
    if config.n_samples < 10 * problem.dim:
        raise ValueError("n_samples must be at least 10x the parameter dimension")
    executor = None
    if threads is None or threads < 1:
        threads = os.cpu_count() or 1
    try:
        if threads > 1:
            executor = ThreadPoolExecutor(max_workers=threads)
        stage = init_stage(problem, config, executor)
        stage.ess = float(config.n_samples)
        stage.beta = config.beta_scale
        stages = [stage]
        if on_stage:
            on_stage(_stage_record(stage))
        log_evidence = 0.0
        beta = config.beta_scale
        while stage.exponent < 1.0:
            if len(stages) - 1 >= config.max_stages:
                result = _finalize(stages, log_evidence, completed=False)
                raise StageLimitExceeded(result)
            r_next = next_exponent(stage, config)
            weights, log_s = plausibility_weights(stage, r_next)
            stage.weights = weights
            stage.log_increment = log_s
            ess = 1.0 / float(np.sum(weights**2))
            cov = proposal_covariance(stage, weights, beta)
            stage.proposal_cov = cov
            new = resample_and_propagate(
                stage, r_next, weights, cov, problem, config, executor, beta
            )
            new.log_increment = log_s
            new.ess = ess
            log_evidence += log_s
            beta = adapt_beta(beta, new.acceptance_rate, config)
            stages.append(new)
            stage = new
            if on_stage:
                on_stage(_stage_record(stage))
        return _finalize(stages, log_evidence, completed=True)
    finally:
        if executor is not None:
            executor.shutdown()


def _finalize(stages, log_evidence, completed):
    last = stages[-1]
    return PosteriorResult(
        samples=last.samples,
        log_evidence=log_evidence,
        stages=stages,
        mean=last.samples.mean(axis=0),
        std=last.samples.std(axis=0),
        completed=completed,
    )


def samples_to_csv(path, samples, names):
    """One row per sample, one column per dimension, named header."""
    samples = np.atleast_2d(samples)
    if samples.shape[1] != len(names):
        raise ValueError("column names must match the sample dimension")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(names))
        for row in samples:
            w.writerow([repr(float(x)) for x in row])
