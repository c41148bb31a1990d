"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A caller-supplied argument is out of its documented range."""


class DegeneracyError(ValueError):
    """A neighbor distance collapsed below the resolvable floor in strict mode."""


class ConfigurationError(ValueError):
    """An estimator or experiment configuration is internally inconsistent."""


class SolverError(RuntimeError):
    """A weight-optimization solve failed (rank deficiency or non-convergence)."""

    def __init__(self, message, best_weights=None, residuals=None):
        super().__init__(message)
        self.best_weights = best_weights
        self.residuals = residuals
