class SparsityError(Exception):
    """Base class for errors raised by this package."""


class DomainError(SparsityError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class PanelBudgetExceeded(SparsityError, RuntimeError):
    """Adaptive quadrature could not meet its tolerance within the panel budget."""


class SpecError(SparsityError, ValueError):
    """A parameter-vector or experiment description is malformed."""


class ParseError(SparsityError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FamilyViolation(SparsityError, ValueError):
    """A parameter vector does not belong to the family it was declared in."""


class NonMonotone(SparsityError, RuntimeError):
    """Estimated risk is not monotone along a separation search."""


class MissingCalibration(SparsityError, LookupError):
    """No cached null calibration is available for the requested setting."""


class DegenerateInput(SparsityError, ValueError):
    """The observation carries no information for the requested statistic."""
