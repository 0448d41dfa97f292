"""Exception types raised across the package."""


class GridError(ValueError):
    """Invalid grid parameters, or fields living on different grids."""


class OverflowRisk(FloatingPointError):
    """Speed above the clip threshold with ``mode='error'``."""

    def __init__(self, message, index=None, speed=None):
        super().__init__(message)
        self.index = index
        self.speed = speed


class NonFiniteState(FloatingPointError):
    """A NaN/Inf appeared in the solver state.

    ``ledger`` holds the rows recorded before the failure so callers can still
    flush them to disk.
    """

    def __init__(self, message, time=None, ledger=None):
        super().__init__(message)
        self.time = time
        self.ledger = ledger


class EmptyLedger(ValueError):
    pass


class ModeCountError(ValueError):
    pass


class ConfigError(ValueError):
    """Configuration problem, optionally anchored to a line of the source."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class InvariantViolation(AssertionError):
    """A mathematically guaranteed inequality failed numerically."""
