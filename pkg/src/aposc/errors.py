"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class MembershipError(DomainError):
    """A multi-index is not supported by any set of the spatial structure."""


class InvariantError(ValueError):
    """A stored object violates one of its invariants (e.g. reality)."""


class ResonanceError(ValueError):
    """A small divisor fell below the configured floor."""

    def __init__(self, message, k=None, divisor=None):
        super().__init__(message)
        self.k = k
        self.divisor = divisor


class HypothesisError(ValueError):
    """A hypothesis of a normal-form construction failed on the check grid."""

    def __init__(self, clause, message):
        super().__init__(f"{clause}: {message}")
        self.clause = clause


class ConvergenceError(RuntimeError):
    """An iterative construction did not converge."""


class StiffnessError(RuntimeError):
    """The integrator step size underflowed."""


class DomainExitError(DomainError):
    """The angle-form integration left the region r >= r_star."""

    def __init__(self, message, theta):
        super().__init__(message)
        self.theta = theta


class EscapeError(RuntimeError):
    """An orbit of the scaled section map left the annulus v in [1, 2]."""

    def __init__(self, message, iterate):
        super().__init__(message)
        self.iterate = iterate


class ConfigError(ValueError):
    """The experiment configuration failed validation."""
