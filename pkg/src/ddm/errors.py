"""Exception types shared across the package."""


class DdmError(Exception):
    """Base class for all library errors."""


class InvalidInputError(DdmError, ValueError):
    """Raised when an argument violates an operation's preconditions."""


class SurfaceFormatError(DdmError, ValueError):
    """Raised when a surface file cannot be parsed or uses an unsupported layout."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class ConfigError(DdmError, ValueError):
    """Raised for malformed or unknown configuration entries."""


class NumericalAbort(DdmError, RuntimeError):
    """Raised when the optimizer meets a non-finite objective or gradient.

    Carries the partial trace collected up to the failing iteration.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
