"""Homogeneous complex 2-ODE systems and their polygonal-billiard correspondence."""

__version__ = "0.1.0"

from .errors import (
    ComplexRoots,
    CornerEncounter,
    DegenerateGeometry,
    DegenerateResidue,
    DivergentIntegral,
    DuplicateRoot,
    FitWindowTooSmall,
    InsufficientTail,
    InvalidParameter,
    InvalidSpec,
    MultipleRoots,
    NoConvergence,
    NotEscaped,
    OutsidePolygon,
    ScBilliardError,
    SingularInitial,
    SingularPoint,
    ToleranceFailure,
)
from .polynomials import RealPolynomial, partial_fraction_weights, poly_from_roots
from .systems import (
    BilliardSpec,
    InitialCondition,
    ODESystem,
    build_system,
    conserved_modulus,
    default_prevertices,
    newtonian_system,
    normalize_initial,
    recover_spec,
    spec_from_json,
    spec_to_json,
    state_from,
)

__all__ = [name for name in dir() if not name.startswith("_")]
