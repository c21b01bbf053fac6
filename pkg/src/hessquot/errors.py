"""Exception types raised across the package."""


class HessquotError(Exception):
    """Base class for package errors."""


class DomainError(HessquotError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class AdmissibilityError(HessquotError, ValueError):
    """A matrix or field left the admissible (positive) cone."""

    def __init__(self, message, min_eigenvalue=None, node=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue
        self.node = node


class ConfigurationError(HessquotError, ValueError):
    """Grid, stencil or option settings that cannot work."""


class StencilError(HessquotError, IndexError):
    """A stencil reached outside the grid."""


class UnsupportedOperationError(HessquotError):
    """Operation not defined for this domain kind (e.g. distance on a torus)."""


class ValidationError(HessquotError, ValueError):
    """Problem data violates a precondition (positivity, boundary match)."""


class ProblemFileError(HessquotError, ValueError):
    """Malformed problem file; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class StepFailure(HessquotError):
    """Newton line search exhausted without an acceptable step."""


class NonconvergenceError(HessquotError):
    """Continuity path stalled; ``diagnostics`` holds the solver log."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ResourceError(HessquotError, MemoryError):
    """Estimated memory for a solve exceeds what the machine has."""
