"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes or generator sets do not match."""


class SingularMeasurementError(ArithmeticError):
    """The measured block plus resolution covariance cannot be inverted."""


class InvalidMeasurementError(ValueError):
    """A measurement covariance violates its kind's constraints."""


class ClosedFormUndefinedError(ValueError):
    """A closed-form expression is requested outside its domain (e.g. a_x = 0)."""


class CapacityError(MemoryError):
    """A representation would exceed the configured size limits."""


class ConvergenceError(RuntimeError):
    """A propagator or truncation did not meet its tolerance."""
