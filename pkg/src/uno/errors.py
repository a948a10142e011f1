"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems -> 1, DataError -> 2,
NumericalError -> 3.
"""


class UnoError(Exception):
    """Base class for package errors."""


class ShapeError(UnoError):
    """Operands or configuration have incompatible shapes or extents."""


class NonFiniteError(UnoError):
    """A computation produced NaN or Inf."""


class DataError(UnoError):
    """A file, dataset, or checkpoint is malformed or inconsistent."""


class NumericalError(UnoError):
    """A solver failed to converge or a trajectory blew up."""
