"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class InfeasibleError(Exception):
    """The delay bound cannot be met by any stopping policy.

    ``threshold`` is the smallest achievable expected delay (in slots).
    """

    def __init__(self, message, threshold=None):
        super().__init__(message)
        self.threshold = threshold


class NonConvergenceError(RuntimeError):
    """A root finder ran out of iterations.

    ``residuals`` holds the best residuals seen, keyed by name.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = dict(residuals or {})


class NoBracketError(NonConvergenceError):
    """Bracket expansion failed to produce a sign change."""


class InfiniteDelayError(RuntimeError):
    """A packet never got through (success probability is zero)."""
