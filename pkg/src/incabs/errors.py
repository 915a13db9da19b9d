"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class IncabsError(Exception):
    """Base class for every error raised by this package."""


# mesh
class InvalidDomain(IncabsError, ValueError):
    pass


class TooFewPoints(IncabsError, ValueError):
    pass


class IndexOutOfRange(IncabsError, IndexError):
    pass


class RegionOutOfMesh(IncabsError, ValueError):
    pass


class BudgetTooSmall(IncabsError, ValueError):
    pass


class AlreadyFull(IncabsError):
    pass


# funcs
class ParseError(IncabsError, ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnknownIdentifier(ParseError):
    pass


class ArityMismatch(IncabsError, ValueError):
    pass


class DomainError(IncabsError, ArithmeticError):
    pass


class UnknownBuiltin(IncabsError, KeyError):
    pass


class BadParameter(IncabsError, ValueError):
    pass


# lp
class EmptyInput(IncabsError, ValueError):
    pass


class ShapeMismatch(IncabsError, ValueError):
    pass


class LPSolveError(IncabsError, RuntimeError):
    status = "numerical_failure"


class Infeasible(LPSolveError):
    status = "infeasible"


class Unbounded(LPSolveError):
    status = "unbounded"


class NumericalFailure(LPSolveError):
    status = "numerical_failure"


# abstraction
class MissingConstant(IncabsError, ValueError):
    pass


class MemoryBudgetExceeded(IncabsError, MemoryError):
    """Raised when a run would hold more sample points than the configured cap."""


# verify
class OracleScaleExceeded(IncabsError, ValueError):
    pass


# cli
class ConfigError(IncabsError, ValueError):
    pass


class BadSlice(IncabsError, ValueError):
    pass
