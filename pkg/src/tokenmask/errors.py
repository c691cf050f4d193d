"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand extents disagree, or a tensor has the wrong rank."""


class ConfigError(ValueError):
    """A head, resampling or benchmark configuration cannot be satisfied."""


class CounterMismatch(AssertionError):
    """Analytical costs disagree with instrumented counters."""
