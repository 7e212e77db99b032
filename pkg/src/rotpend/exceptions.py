"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """Physical or numerical parameters outside their admissible range."""


class InvalidWindingError(ValueError):
    """Winding vector is zero or not prime."""


class HypothesisError(ValueError):
    """A hypothesis of a multiplicity bound (e.g. 1 <= N0 <= N-1) is violated."""


class ProblemMismatchError(ValueError):
    """Two loops or records belong to different rotation problems."""


class InfeasibleError(ValueError):
    """Level construction requested for parameters outside the feasible window."""


class EmptySetError(ValueError):
    """A torus constraint set has no satisfying pin assignment."""


class CertificateError(RuntimeError):
    """A potential-bound certificate failed. Indicates a bug, never a valid outcome."""


class NotCriticalError(ValueError):
    """Hessian classification requested far from a critical point."""
