"""Exception hierarchy shared by the package."""


class BlowupLabError(Exception):
    """Base class for all package errors."""


class ArgumentError(BlowupLabError, ValueError):
    """An argument is outside the supported set (bad index, wrong shape)."""


class DomainError(BlowupLabError, ValueError):
    """A point or parameter lies outside the domain of a formula."""


class AdmissibilityError(BlowupLabError, ValueError):
    """A boost parameter fails the profile positivity check."""


class DegenerateRatioError(BlowupLabError, ArithmeticError):
    """A ratio recursion divided by a vanishing ratio."""


class NumericalError(BlowupLabError, RuntimeError):
    """A quadrature, ODE or eigen solve failed; carries diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnsupportedError(BlowupLabError, ValueError):
    """The request is well formed but not supported (e.g. irregular singular point)."""


class BracketError(BlowupLabError, ValueError):
    """Bisection endpoints carry the same label."""
