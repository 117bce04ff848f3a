"""Exception hierarchy shared by all pvnet modules."""


class PVNetError(Exception):
    """Base class for every error raised deliberately by pvnet."""


class DimensionError(PVNetError, ValueError):
    """Array shapes do not conform."""


class ParameterError(PVNetError, ValueError):
    """A scalar or structural argument is outside its allowed range."""


class DomainError(PVNetError, ValueError):
    """A physical quantity is outside the domain of the formula."""


class NumericalError(PVNetError, ArithmeticError):
    """A numerical procedure failed (no bracket, non-finite loss, ...)."""


class OutOfRangeError(PVNetError, IndexError):
    """A requested instant is not covered by a series."""


class EmptyReportError(PVNetError, ValueError):
    """Metrics were requested over an empty sample set."""


class FormatError(PVNetError, ValueError):
    """A file does not match its declared format."""


class ConfigError(PVNetError, ValueError):
    """A configuration key or value is invalid.

    Attributes
    ----------
    key : str or None
        Offending configuration key, when known.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
