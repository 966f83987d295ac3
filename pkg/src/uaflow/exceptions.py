"""Error types raised across the package.

Each class maps to one failure category; the CLI translates them into exit codes.
"""


class UAFlowError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InvalidArgument(UAFlowError, ValueError):
    exit_code = 2


class DegenerateInput(UAFlowError, ValueError):
    exit_code = 2


class ConfigError(UAFlowError, ValueError):
    exit_code = 2


class NumericalFailure(UAFlowError, ArithmeticError):
    exit_code = 3


class NotInDomain(NumericalFailure):
    """Point pair outside the injectivity domain of a logarithm map."""


class NotPositiveDefinite(NumericalFailure):
    """Cholesky factorization of a supposedly SPD matrix failed."""


class FlowTimeout(UAFlowError, RuntimeError):
    """Integration hit the outer step cap before the entropy criterion was met."""

    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UAFlowWarning(UserWarning):
    """Recoverable events: frozen empty labels, inner-loop fallbacks."""
