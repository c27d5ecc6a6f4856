"""Exception types raised across the package."""


class RidgeliftError(Exception):
    """Base class for all package errors."""


class ArgumentError(RidgeliftError, ValueError):
    """An argument is outside its admissible range."""


class ShapeError(RidgeliftError, ValueError):
    """Array shapes do not agree."""


class DomainError(RidgeliftError, ValueError):
    """A query point lies outside the function's domain."""


class DegenerateError(RidgeliftError):
    """A matrix has fewer significant singular values than requested."""


class BudgetError(RidgeliftError):
    """A requested construction exceeds its configured size cap."""


class InfeasibleError(RidgeliftError):
    """Sample-complexity requirements cannot be met simultaneously."""


class ConfigError(RidgeliftError, ValueError):
    """A configuration file or value is malformed."""


class NonConvergence(RidgeliftError):
    """A solver hit its iteration cap without meeting its stopping rule.

    The last iterate is attached as ``estimate`` so callers can still
    inspect it.
    """

    def __init__(self, iterations, residual, estimate=None):
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual
        self.estimate = estimate


class SearchExhausted(RidgeliftError):
    """A minimal-measurement search reached its cap without success."""

    def __init__(self, cap, probes=()):
        super().__init__(f"no passing m_phi up to cap {cap}")
        self.cap = cap
        self.probes = list(probes)
