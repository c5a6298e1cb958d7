"""Exception hierarchy shared across the package.

Everything raised for bad input data derives from :class:`DataError`, which the
CLI maps to exit code 2.
"""


class DataError(ValueError):
    """Malformed, corrupt or inconsistent input data."""


class EmptyModelError(DataError):
    pass


class BadMagicError(DataError):
    pass


class TruncatedError(DataError):
    pass


class ShapeMismatchError(DataError):
    pass


class CodecError(DataError):
    """A coded stream failed to decode."""


class ContainerError(DataError):
    """A compressed container is corrupt, truncated or of an unknown version."""
