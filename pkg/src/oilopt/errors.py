"""Error taxonomy shared across the package.

Validation problems (bad config values, malformed model data) raise
ConfigError or plain ValueError; the CLI maps those to exit code 1.
Numerical failures discovered while solving map to exit code 2.
"""


class ConfigError(ValueError):
    """A configuration file or model description failed validation."""


class NumericalError(RuntimeError):
    """Base class for failures of the numerical machinery."""


class ContractionError(NumericalError):
    """Quadrature mass check |sum c_j - Gamma|/r >= 1; solver refuses to run."""


class MonotonicityError(NumericalError):
    """A scheme coefficient violates the sign condition for the chosen stencil."""


class ConvergenceError(NumericalError):
    """Fixed-point iteration hit the iteration cap before reaching tolerance."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])
