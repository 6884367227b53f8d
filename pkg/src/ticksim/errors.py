"""Exception and warning types raised across ticksim."""


class TicksimError(Exception):
    """Base class for all ticksim errors."""


class ValidationError(TicksimError, ValueError):
    """Input fails a structural or physical validity requirement."""


class NeverTicksError(ValidationError):
    """The clock has no nonzero tick operator."""


class ShapeError(TicksimError, ValueError):
    pass


class SizeError(TicksimError, MemoryError):
    """A dense matrix would exceed the configured size cap."""


class NumericError(TicksimError, ArithmeticError):
    pass


class DomainError(TicksimError, ValueError):
    pass


class ModeError(TicksimError, ValueError):
    """Operation not defined for the clock's register mode."""


class HorizonError(TicksimError):
    """The time grid does not carry enough probability mass."""

    def __init__(self, message, suggested_t_max=None):
        super().__init__(message)
        self.suggested_t_max = suggested_t_max


class AccuracyError(TicksimError):
    """Numerical accuracy requirement violated; carries a suggested step."""

    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class DegenerateDistributionError(TicksimError):
    pass


class InsufficientDataError(TicksimError):
    pass


class PairingError(TicksimError, ValueError):
    pass


class ResourceError(TicksimError):
    """Enumeration budget exceeded."""

    def __init__(self, message, suggested_n=None):
        super().__init__(message)
        self.suggested_n = suggested_n


class InvariantError(TicksimError):
    """An internal invariant (trace, positivity) was violated."""


class HorizonWarning(UserWarning):
    """Delay function mass is still arriving at the end of the grid."""

    def __init__(self, message, suggested_t_max=None):
        super().__init__(message)
        self.suggested_t_max = suggested_t_max
