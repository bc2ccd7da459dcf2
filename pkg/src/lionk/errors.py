"""Exception types raised across the package."""


class LionKError(Exception):
    """Base class for all package errors."""


class NumericalError(LionKError):
    """A numerical routine (e.g. an SVD) failed to converge."""


class DegenerateInputError(LionKError, ValueError):
    """Input is outside the well-defined region of an operation (e.g. X = 0)."""


class DimensionError(LionKError, ValueError):
    """Matrix shapes do not agree."""


class DomainError(LionKError, ValueError):
    """Argument lies outside the effective domain of a function."""


class ScheduleExhaustedError(LionKError):
    """A finite-horizon step-size schedule was queried past its horizon."""


class UnsupportedMapError(LionKError, TypeError):
    """The convex map lacks a property the operation requires."""


class MissingOptimumError(LionKError):
    """A diagnostic needs F* but the problem does not supply it."""


class ConvergenceError(LionKError):
    """An iterative solver hit its iteration cap."""


class ConfigError(LionKError):
    """Invalid experiment configuration.

    ``line`` is the 1-based line in the config file, when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
