"""Exception hierarchy shared by all modules."""


class RoaCertError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(RoaCertError, ValueError):
    """A state, matrix or dictionary does not match the system dimension."""


class NumericError(RoaCertError, ArithmeticError):
    """A model evaluation produced non-finite values."""


class DegenerateDataError(RoaCertError, ValueError):
    """Extreme-value data with (numerically) zero spread."""


class HeavyTailError(RoaCertError):
    """Fitted GEV shape is non-negative, so there is no finite right endpoint."""


class ProjectionError(RoaCertError):
    """Newton projection onto a level set stalled or hit a critical point of V."""


class NonCompactLevelSetError(RoaCertError):
    """A ray from the origin never reaches the requested level of V."""


class SeedError(RoaCertError):
    """No certifiable seed level could be established near the origin."""


class UnsupportedDimensionError(RoaCertError, ValueError):
    """The requested operation is only available for low-dimensional systems."""


class ConfigError(RoaCertError, ValueError):
    """Malformed or inconsistent run configuration."""


class BudgetExceededError(RoaCertError):
    """A run hit its wall-clock deadline."""
