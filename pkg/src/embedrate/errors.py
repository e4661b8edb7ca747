"""Exception types shared across the package."""


class EmbedrateError(Exception):
    """Base class for every error raised by embedrate."""


class ShapeError(EmbedrateError, ValueError):
    """Array shapes are incompatible with an operation or a layer."""


class DomainError(EmbedrateError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class ParseError(EmbedrateError, ValueError):
    """A text artifact could not be parsed.

    ``line`` is the 1-based line number of the offending line, when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
