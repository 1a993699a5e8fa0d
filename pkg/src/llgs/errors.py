"""Exception hierarchy shared by the library and the command line."""

from __future__ import annotations


class LlgsError(Exception):
    """Base class for every error raised on purpose by llgs."""


class UsageError(LlgsError):
    """Bad command-line usage (exit code 1)."""


class DataError(LlgsError, ValueError):
    """Inputs that cannot be used: malformed files, missing views, invalid cameras (exit code 2)."""


class PlyFormatError(DataError):
    """A PLY file could not be parsed; ``offset`` is the byte offset where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ImageFormatError(DataError):
    """An image file has an unsupported mode or shape."""


class ConfigError(LlgsError, ValueError):
    """Invalid configuration values or unknown configuration keys."""


class NumericalError(LlgsError):
    """Optimization produced values that cannot be recovered from (exit code 3)."""


class NumericalAbort(NumericalError):
    """Raised after too many consecutive non-finite iterations."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration
