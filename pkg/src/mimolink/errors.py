"""Exception hierarchy shared by all simulator modules."""


class MimolinkError(Exception):
    """Base class for simulator errors."""


class InvalidParameterError(MimolinkError, ValueError):
    """A parameter violates its documented constraint."""


class DimensionError(MimolinkError, ValueError):
    """Array or grid dimensions do not agree."""


class UndefinedAverageError(MimolinkError, ArithmeticError):
    """An average was requested over a window with nothing to average."""
