"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class LabelNoiseError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(LabelNoiseError, ValueError):
    """An argument is outside its documented domain."""


class StateError(LabelNoiseError, RuntimeError):
    """An object is used before it is ready, e.g. an uncalibrated channel."""


class ParseError(LabelNoiseError, ValueError):
    """A data file is malformed. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(LabelNoiseError, ArithmeticError):
    """A computation produced non-finite or degenerate values."""


class ConvergenceError(NumericalError):
    """An iterative solver did not reach its tolerance."""
