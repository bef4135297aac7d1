"""Exception types raised across the package."""


class DegenerateDataError(ValueError):
    """Input data has zero variance or insufficient rank for the requested fit."""


class InvalidGeometryError(ValueError):
    """A geometric precondition (e.g. positive depth under perspective) failed."""


class NumericalError(FloatingPointError):
    """A NaN or infinity appeared during training or backpropagation."""


class DatasetParseError(ValueError):
    """A dataset file could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ValueError):
    """Inputs are well-formed but inconsistent with each other."""
