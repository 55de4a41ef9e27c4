"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument is outside the mathematical domain of the operation."""


class InputError(ValueError):
    """Malformed numerical input (non-finite values, bad shapes)."""


class DegenerateInputError(ValueError):
    """Input sits on a measure-zero degenerate set (ties, kinks)."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance.

    Attributes
    ----------
    primal_residual, dual_residual : float
        Residual norms at the final iteration, when applicable.
    """

    def __init__(self, message, primal_residual=None, dual_residual=None):
        super().__init__(message)
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual


class ConfigError(ValueError):
    """Invalid experiment or prior configuration."""


class DiagnosticsError(RuntimeError):
    """Sampler diagnostics indicate an unusable chain."""

    def __init__(self, message, divergence_rate=None):
        super().__init__(message)
        self.divergence_rate = divergence_rate
