"""Package exception types."""


class BmsError(Exception):
    """Base class for package errors."""


class ModelError(BmsError):
    """Inconsistent system, sensor, or coupling data."""


class WeightError(BmsError):
    """A weight matrix that must be symmetric positive definite is not."""


class ConditioningError(BmsError):
    """A factorization failed; carries the pivot index and a condition estimate."""

    def __init__(self, message, pivot_index=None, condition_estimate=None):
        super().__init__(message)
        self.pivot_index = pivot_index
        self.condition_estimate = condition_estimate


class ConvergenceError(BmsError):
    """An iterative solve hit its cap; carries the last iterate and residual."""

    def __init__(self, message, last_iterate=None, grad_norm=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.grad_norm = grad_norm


class ObservabilityError(BmsError):
    """A tuning step needs a positive observability measure and got none."""


class MeshError(BmsError):
    """Mesh generation or I/O failure."""


class LocationError(BmsError):
    """A sensor location falls outside the meshed domain."""


class ConfigError(BmsError):
    """Invalid scenario configuration."""


class InfeasibleError(BmsError):
    """A constraint polyhedron has no strictly feasible point."""
