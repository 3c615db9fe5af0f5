"""Exception types shared across the package."""


class MincoplanError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(MincoplanError):
    """Array arguments have inconsistent shapes."""


class SingularMatrix(MincoplanError):
    """A pivot fell below the singularity threshold during factorization."""


class NonPositiveDuration(MincoplanError):
    """A piece duration is zero or negative."""


class OutOfDomain(MincoplanError):
    """A query time lies outside the trajectory's time domain."""


class DomainViolation(MincoplanError):
    """An inverse-map argument lies outside the feasible set."""


class NoOverlap(MincoplanError):
    """Two corridor elements do not share an interior point."""


class Infeasible(MincoplanError):
    """A polytope is empty or has no interior."""


class DegeneratePolytope(MincoplanError):
    """A polytope is unbounded or dimensionally deficient."""


class SingularThrust(MincoplanError):
    """The specific-thrust vector vanished; attitude is undefined."""


class SingularYaw(MincoplanError):
    """The zero-yaw frame is undefined (thrust axis aligned with e1)."""
