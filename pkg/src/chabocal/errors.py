"""Exception types shared across the package."""


class ChabocalError(Exception):
    """Base class for all package-specific errors."""


class SingularDirection(ChabocalError):
    """Flow direction requested at (or too close to) the yield-surface apex."""


class NoConvergence(ChabocalError):
    """Implicit constitutive update did not converge; the step is too large."""

    def __init__(self, iterations, message=None):
        self.iterations = iterations
        super().__init__(message or f"no convergence after {iterations} iterations")


class ForwardFailure(ChabocalError):
    """Forward simulation failed even after maximal step subdivision."""


class OutOfRange(ChabocalError):
    """Time lies outside the defined load program."""


class PriorUnsamplable(ChabocalError):
    """Prior support rejected every proposal within the retry cap."""


class DegenerateWeights(ChabocalError):
    """Plausibility weights are unusable (e.g. every log-likelihood is -inf)."""


class RankDeficient(ChabocalError):
    """Proposal covariance could not be factorized even after jitter."""


class StageLimitExceeded(ChabocalError):
    """Sampler hit the stage cap before the tempering exponent reached 1.

    Carries the partial result so callers can still persist diagnostics.
    """

    def __init__(self, result, message=None):
        self.result = result
        super().__init__(message or "stage limit reached before tempering completed")


class ConfigError(ChabocalError):
    """Run configuration failed validation; `field` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ChainStallWarning(UserWarning):
    """A Metropolis chain accepted no proposal over its whole run."""
