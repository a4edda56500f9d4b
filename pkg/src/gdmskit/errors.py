"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class GdmsError(Exception):
    """Base class for library errors."""


class InvalidInputError(GdmsError, ValueError):
    """Malformed arguments, unknown symbols or schema violations."""


class SingularMapError(GdmsError):
    """A map was evaluated at (or its domain contains) a pole."""


class NoConvergenceError(GdmsError):
    """An iterative solver hit its iteration cap."""


class NotRegularError(GdmsError):
    """The pressure function has no sign change in the scanned range."""


class SpectralError(GdmsError):
    """Power iteration or eigen-solve failed to produce a leading eigenpair."""


class MustInduceError(GdmsError):
    """The quantity is only defined after inducing a parabolic system."""


class InvalidGeometryError(GdmsError, ValueError):
    """Circle data violate tangency, disjointness or pairing requirements."""


class NumericalInstabilityError(GdmsError):
    """A computed quantity violates a sign or range constraint."""


class LatticeDegenerateError(GdmsError):
    """A Gaussian comparison was requested with zero variance."""


class BudgetExceededError(GdmsError):
    """Enumeration exceeded its node budget.

    Parameters
    ----------
    message : str
        Human readable description.
    partial : object, optional
        Partial result accumulated before the budget ran out.
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial
