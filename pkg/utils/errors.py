"""Exception hierarchy shared by every package."""


class CdaError(Exception):
    """Base class for all errors raised by this project."""


class ConfigurationError(CdaError, ValueError):
    """Invalid configuration or parameter value."""


class SizeError(ConfigurationError):
    """Input larger than an operation supports."""


class DimensionError(CdaError, ValueError):
    """Shape mismatch between matrices, networks or feature vectors."""


class NumericalError(CdaError, ArithmeticError):
    """Non-finite values in gradients or parameters."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class DivergenceError(NumericalError):
    """Training loss left the finite range."""

    def __init__(self, message, epoch=None, step=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step


class DataError(CdaError, ValueError):
    """Invalid data content (labels out of range, empty inputs)."""


class ParseError(DataError):
    """A file could not be parsed. ``line`` is 1-based."""

    def __init__(self, message, line=None, key=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.key = key


class ContractError(CdaError, ValueError):
    """A documented precondition was violated by the caller."""
