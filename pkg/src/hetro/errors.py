"""Exception types shared across the package.

Every error raised deliberately by this package derives from
:class:`HetroError`, so callers can catch one base class at API
boundaries while still distinguishing failure modes.
"""


class HetroError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(HetroError):
    """Design matrix and response vector have incompatible shapes."""


class RankDeficient(HetroError):
    """A design matrix is numerically rank deficient."""


class DegenerateResidual(HetroError):
    """A residual is too close to zero for log or ratio statistics."""


class NotApplicable(HetroError):
    """A diagnostic's preconditions fail for the given problem size."""


class InvalidDof(HetroError):
    """A degrees-of-freedom parameter is not a positive integer."""


class InvalidShape(HetroError):
    """Frame dimensions are out of range (requires 1 <= k <= n)."""


class InfeasibleScenario(HetroError):
    """A simulation scenario's derived parameters are unusable."""


class UnknownTable(HetroError):
    """A requested built-in simulation table name does not exist."""


class ParseError(HetroError):
    """Input text (CSV data or a grid file) could not be parsed."""
