"""Exception hierarchy shared by every psifrac module."""

from __future__ import annotations


class PsifracError(Exception):
    """Base class for all library errors."""


class InvalidParameter(PsifracError, ValueError):
    pass


class InversionFailure(PsifracError):
    """Bisection for a tabulated generator could not bracket a target value."""


class PoleError(PsifracError, ValueError):
    """Gamma function evaluated at a non-positive integer."""


class NonConvergence(PsifracError):
    """A series did not reach its tolerance within the term budget."""


class RadiusError(PsifracError, ValueError):
    """Argument outside the radius where a series evaluator is trusted."""


class OrderError(PsifracError, ValueError):
    """Fractional order outside the range an operator supports."""


class NonFinite(PsifracError, FloatingPointError):
    """Right-hand side produced a NaN or infinity."""


class DegenerateProblem(PsifracError):
    """The boundary system determinant vanishes (relative to its terms)."""


class NoConvergence(PsifracError):
    """Fixed-point iteration hit ``max_iter`` without meeting ``tol``.

    The partially converged bundle is attached so callers can still export
    the iteration trace.
    """

    def __init__(self, message: str, bundle=None):
        super().__init__(message)
        self.bundle = bundle


class ConditionViolated(PsifracError):
    """A theorem side condition needed to evaluate a bound does not hold."""


class AssumptionViolated(PsifracError):
    """A user-supplied assumption failed its nodewise spot check."""


class ConfigError(PsifracError):
    pass


class ParseError(ConfigError):
    pass


class SchemaError(ConfigError):
    pass


class RangeError(ConfigError, ValueError):
    pass
