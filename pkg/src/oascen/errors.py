"""Exception hierarchy shared across the package.

Every exception carries an ``exit_code`` so the CLI can map failures to the
documented process exit codes without a lookup table.
"""


class OascenError(Exception):
    exit_code = 1


class ValidationError(OascenError):
    exit_code = 2


class ParseError(ValidationError):
    pass


class UnknownNode(ValidationError, KeyError):
    pass


class DegenerateDay(ValidationError):
    pass


class InsufficientData(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class SolverError(OascenError):
    exit_code = 3


class SolverFailure(SolverError):
    pass


class InfeasibleDispatch(SolverError):
    pass


class InfeasibleReserve(SolverError):
    pass


class DataIOError(OascenError):
    exit_code = 4


class DegenerateDuals(UserWarning):
    """Issued when a cost gradient is taken at a point with non-unique duals."""
