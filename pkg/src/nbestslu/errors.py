"""Exception hierarchy shared across the package."""


class SluError(Exception):
    """Base class for every error raised by this package."""


class ShapeMismatchError(SluError, ValueError):
    """Operands do not conform; the message names both shapes."""


class DomainError(SluError, ValueError):
    """An argument value is outside the operation's domain."""


class GraphStateError(SluError, RuntimeError):
    """Backward invoked without a usable forward graph."""


class NumericFailure(SluError, ArithmeticError):
    """A NaN or infinity appeared where finite values are required."""


class DataFormatError(SluError, ValueError):
    """A file does not match its declared format or version."""


class ParseError(DataFormatError):
    """A malformed record; the message carries the file location."""


class CorpusError(DataFormatError):
    """A corpus import failed; the message names the call or turn."""


class ConfigError(SluError, ValueError):
    """Invalid configuration, or artifacts that do not belong together."""


class ModelStateError(SluError, RuntimeError):
    """A model is not in a state where the requested operation is valid."""
