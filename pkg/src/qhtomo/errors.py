"""Exception types shared across the package."""


class QhtomoError(Exception):
    """Base class for library errors."""


class CapacityError(QhtomoError, ValueError):
    """Requested order or dimension exceeds a configured capacity."""

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class NumericalError(QhtomoError, ArithmeticError):
    """A numerical routine failed to converge or lost consistency."""


class EnvelopeError(NumericalError):
    """Rejection sampler envelope is too loose to be usable."""


class TuningError(NumericalError):
    """Parameter selection found no admissible root."""
