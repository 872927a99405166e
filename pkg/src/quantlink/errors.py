"""Exception types raised by quantlink."""


class QuantlinkError(Exception):
    """Base class for library errors."""


class UnsupportedSizeError(QuantlinkError, ValueError):
    """A size or resolution outside what an operation supports."""


class DegenerateInputError(QuantlinkError, ValueError):
    """Input with no usable information, e.g. all-zero channel gains."""


class ConfigError(QuantlinkError, ValueError):
    """Invalid experiment configuration."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where += f" (key '{key}'"
            where += f", line {line})" if line is not None else ")"
        super().__init__(message + where)
