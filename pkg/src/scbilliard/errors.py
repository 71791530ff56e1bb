"""Exception types shared across the package."""


class ScBilliardError(Exception):
    """Base class for all scbilliard errors."""


class DuplicateRoot(ScBilliardError):
    """Two polynomial roots coincide (double zeros are outside the supported class)."""


class DegenerateResidue(ScBilliardError):
    """Residue denominator S'(u_a) vanished at a root."""


class InvalidSpec(ScBilliardError):
    """Billiard spec violates the weight sum rule, ordering, or range constraints."""


class InvalidParameter(ScBilliardError):
    """A scalar parameter is outside its allowed range."""


class SingularInitial(ScBilliardError):
    """Initial ratio u0 coincides with a prevertex (corner start) or x2=0."""


class ComplexRoots(ScBilliardError):
    """S has non-real roots; the system is outside the generic real-simple class."""


class MultipleRoots(ScBilliardError):
    """S has a repeated root; the system is outside the generic real-simple class."""


class ToleranceFailure(ScBilliardError):
    """Step size underflowed without a blow-up signature."""


class SingularPoint(ScBilliardError):
    """Map derivative evaluated at a prevertex with exponent < 0."""


class DivergentIntegral(ScBilliardError):
    """Quadrature endpoint is a prevertex whose map integral diverges."""


class NoConvergence(ScBilliardError):
    """Newton inversion failed to converge from every available seed."""


class OutsidePolygon(ScBilliardError):
    """Inversion target lies outside the polygon."""


class DegenerateGeometry(ScBilliardError):
    """Polygon has a zero-length side or otherwise broken geometry."""


class CornerEncounter(ScBilliardError):
    """Orbit hit (or came within guard distance of) a polygon corner."""


class NotEscaped(ScBilliardError):
    """Scattering analysis requires an orbit that escaped to infinity."""


class InsufficientTail(ScBilliardError):
    """Not enough large-amplitude samples to fit a tail exponent."""


class FitWindowTooSmall(ScBilliardError):
    """Blow-up fit window contains too few usable samples."""
