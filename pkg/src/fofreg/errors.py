"""Exception types raised by fofreg."""


class FofregError(Exception):
    """Base class for all fofreg errors."""


class InvalidGridError(FofregError, ValueError):
    """A grid axis is too short, non-monotone, or otherwise malformed."""


class GridMismatchError(FofregError, ValueError):
    """Two function samples that must share a grid do not."""


class ResolutionError(FofregError, ValueError):
    """A grid is too coarse to resolve a requested basis frequency."""


class ValidationError(FofregError, ValueError):
    """A domain object violates one of its structural invariants."""


class SolverNumericalError(FofregError, ArithmeticError):
    """A solver step encountered non-finite numbers or a failed factorization."""


class DataFormatError(FofregError, ValueError):
    """A dataset/model/config file failed to parse or validate.

    The message names the first offending field and record index.
    """


class FormatVersionError(DataFormatError):
    """A file declares a format version this build does not understand."""
