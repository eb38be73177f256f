"""Exception hierarchy shared across the engine."""


class PearlError(Exception):
    """Base class for all engine errors."""


class EmptyBucketError(PearlError):
    """A message repository bucket has no messages for the requested theme."""


class InsufficientHistoryError(PearlError):
    """Too few days of step data to run eligibility screening."""


class InsufficientDataError(PearlError):
    """Not enough observations for the requested computation."""


class DegenerateBaselineError(PearlError):
    """A baseline cell is below the floor that keeps the relative reward defined."""


class TooFewSamplesError(PearlError):
    """Training set smaller than the minimum leaf size."""


class ZeroPropensityError(PearlError):
    """A logged decision carries a non-positive propensity."""


class DegenerateDesignError(PearlError):
    """A regression arm has fewer than two participants."""


class SingularDesignError(PearlError):
    """Design matrix is rank deficient."""


class NoConvergenceError(PearlError):
    """Iterative estimator failed to converge within the iteration cap."""


class ConfigError(PearlError):
    """Invalid or unreadable configuration."""
