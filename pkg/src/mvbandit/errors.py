"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: config/usage problems exit 1, data or
model problems exit 2, numeric failures exit 3.
"""


class MvbanditError(Exception):
    """Base class for all package errors."""


class ShapeError(MvbanditError, ValueError):
    """Array dimensions do not line up."""


class DomainError(MvbanditError, ValueError):
    """Argument outside its mathematical domain (e.g. sigma <= 0)."""


class ConfigError(MvbanditError, ValueError):
    """Invalid or inconsistent configuration."""


class DataError(MvbanditError, ValueError):
    """Dataset violates a precondition (e.g. an action never appears)."""


class CapacityError(MvbanditError, ValueError):
    """Requested exact enumeration is too large."""


class TrainingError(MvbanditError, RuntimeError):
    """Non-finite loss or gradient during optimization."""


class EstimationError(MvbanditError, RuntimeError):
    """Estimator could not produce a meaningful value."""


class RecommendationError(MvbanditError, RuntimeError):
    """No action could be recommended (e.g. nothing has support)."""
