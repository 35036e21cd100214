"""Exception types shared across the package."""


class HybridControlError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(HybridControlError):
    """A study or scenario configuration is invalid."""


class EstimationError(HybridControlError):
    """Base class for model-fitting failures."""


class SeparationError(EstimationError):
    """Logistic MLE is undefined: perfect separation or single-class labels."""


class SingularDesignError(EstimationError):
    """Normal equations are rank deficient."""


class ConvergenceError(EstimationError):
    """Iterative fit exhausted its iteration budget."""


class MonotoneLikelihoodError(EstimationError):
    """Partial likelihood is maximized at infinity (coefficients diverge)."""


class DegenerateScaleError(EstimationError):
    """AFT scale estimate collapsed to (numerically) zero."""


class MixingFailure(HybridControlError):
    """MCMC chains did not mix (split-Rhat above threshold)."""
