"""Exception types shared across the package."""


class MoproxError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MoproxError, ValueError):
    """Invalid configuration, instance specification, or config document."""


class InputError(MoproxError, ValueError):
    """Invalid runtime input, e.g. a non-finite point or a non-positive prox step."""


class EvaluationError(MoproxError, RuntimeError):
    """A smooth oracle returned a non-finite value, gradient, or Hessian."""

    def __init__(self, message, objective_index=None):
        super().__init__(message)
        self.objective_index = objective_index


class SingularMetricError(MoproxError, RuntimeError):
    """The weighted Hessian could not be factorized as positive definite."""


class ConvergenceError(MoproxError, RuntimeError):
    """An iterative loop hit its cap before reaching its tolerance.

    Carries the final residual and, when available, the best iterate found.
    """

    def __init__(self, message, residual=None, best=None):
        super().__init__(message)
        self.residual = residual
        self.best = best


class LineSearchError(MoproxError, RuntimeError):
    """No backtracking step satisfied the sufficient-decrease test."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class InsufficientDataError(MoproxError, ValueError):
    """Too few usable points to fit a convergence rate."""
