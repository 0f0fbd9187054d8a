"""Exception hierarchy shared across the package.

Two bases matter for the CLI exit-code mapping: ValidationError (bad input or
configuration, exit 2) and NumericalError (a computation that could not be
completed, exit 3). I/O problems use the builtin OSError (exit 4).
"""


class ValidationError(ValueError):
    """Invalid input, configuration, or precondition."""


class DimensionError(ValidationError):
    """Array shapes or sizes do not satisfy an operation's contract."""


class ConfigError(ValidationError):
    """Bad configuration value or unknown configuration key."""


class PreconditionError(ValidationError):
    """A documented operation precondition does not hold."""


class DegenerateInputError(ValidationError):
    """Input is degenerate for the requested statistic (constant series,
    all-equal centers, zero covariance, singular design, ...)."""


class BracketError(ValidationError):
    """A root bracket does not contain a sign change."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed (overflow, divergence, no fit)."""


class NoFitError(NumericalError):
    """No uncensored data available to fit."""


class AbortedRunError(NumericalError):
    """A simulation or training run diverged; carries the partial log."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
