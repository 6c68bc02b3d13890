"""
Error types
Exceptions raised by the analysis modules and mapped to exit codes by main.py.
"""


class SeasonalModelError(Exception):
    """Base class for all errors raised by the analysis modules."""


class InvalidParameterError(SeasonalModelError):
    """Model constants are missing, non-finite or not strictly positive."""


class InvalidStateError(SeasonalModelError):
    """A state vector has non-finite components or a non-positive resource."""


class ConfigurationError(SeasonalModelError):
    """Inconsistent run or integrator configuration."""


class DivergenceError(SeasonalModelError):
    """Integration produced non-finite values."""

    def __init__(self, time: float, message: str = ""):
        self.time = float(time)
        text = f"integration diverged at t={self.time:.6g}"
        if message:
            text = f"{text}: {message}"
        super().__init__(text)


class DomainError(SeasonalModelError):
    """A closed form was evaluated outside the range where it is defined."""


class SeasonTooShortError(SeasonalModelError):
    """The junction time T - ln(2)/a is not positive."""


class InvalidAnchorError(SeasonalModelError):
    """A tributary anchor does not satisfy the relation of its curve."""


class InsufficientInteriorError(SeasonalModelError):
    """No grid node lies far enough from the boundary curve."""
