"""Exception hierarchy.

The CLI maps these onto its exit codes: configuration / usage problems
exit 1, data problems exit 2, numeric failures exit 3, gradient-check
failures exit 4.
"""


class EmiregError(Exception):
    """Base class for all package errors."""


class ShapeError(EmiregError, ValueError):
    """Array shapes incompatible with the requested operation."""


class ConfigError(EmiregError, ValueError):
    """Invalid configuration value, unknown key, or bad command usage."""


class DataError(EmiregError, ValueError):
    """Malformed manifest, feature file, checkpoint, or dataset contents."""


class InsufficientDataError(DataError):
    """Too few samples for the requested statistic."""


class ZeroVarianceError(EmiregError, ArithmeticError):
    """A correlation input column is constant."""


class NumericError(EmiregError, RuntimeError):
    """Non-finite values encountered during training or evaluation."""


class GradientCheckError(EmiregError, RuntimeError):
    """Analytic gradients disagree with finite differences."""
