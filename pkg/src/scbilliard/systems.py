"""Conversion between billiard data (weights, prevertices) and ODE systems.

A spec is the pair (mu, u): r+1 angle weights summing to r-1 and r+1
increasing prevertices.  The matching ODE system is

    x1' = p(x1, x2),   x2' = q(x1, x2)

with homogeneous degree-r polynomials whose single-variable forms satisfy
q(u,1) = Q(u) monic and u Q(u) - p(u,1) = prod(u - u_a).  Rational data is
carried exactly end to end.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import InvalidParameter, InvalidSpec, SingularInitial
from .numeric import Context, arg_upper, clamp_to_real
from .polynomials import RealPolynomial, partial_fraction_weights, poly_from_roots, real_simple_roots

SUM_RULE_TOL = 1e-12


def default_prevertices(r: int) -> list:
    """Conventional prevertices: half-integers centered on the origin."""
    return [Fraction(2 * k + 1, 2) - r // 2 for k in range(r + 1)]


def _is_exact(x) -> bool:
    return isinstance(x, (int, Fraction))


@dataclass(frozen=True)
class BilliardSpec:
    """Defining data of one system/polygon pair."""

    r: int
    mu: tuple
    u: tuple

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(self.mu))
        object.__setattr__(self, "u", tuple(self.u))
        if not isinstance(self.r, int) or self.r < 2:
            raise InvalidSpec(f"homogeneity degree r={self.r} must be an integer >= 2")
        if len(self.mu) != self.r + 1 or len(self.u) != self.r + 1:
            raise InvalidSpec(f"need r+1={self.r + 1} weights and prevertices")
        total = sum(self.mu)
        if all(_is_exact(m) for m in self.mu):
            if total != self.r - 1:
                raise InvalidSpec(f"weight sum {total} != r-1 = {self.r - 1}")
        elif abs(float(total) - (self.r - 1)) > SUM_RULE_TOL:
            raise InvalidSpec(f"weight sum {float(total)} != r-1 = {self.r - 1}")
        for m in self.mu:
            if not (-2 < float(m) < 2):
                raise InvalidSpec(f"weight {m} outside (-2, 2)")
        uf = [float(x) for x in self.u]
        if any(b <= a for a, b in zip(uf, uf[1:])):
            raise InvalidSpec("prevertices must be strictly increasing")

    @property
    def bounded(self) -> bool:
        return all(float(m) > 0 for m in self.mu)

    @property
    def convex(self) -> bool:
        return all(0 < float(m) < 1 for m in self.mu)

    @property
    def rational(self) -> bool:
        return all(_is_exact(m) for m in self.mu)

    @property
    def mu_floats(self) -> list:
        return [float(m) for m in self.mu]

    @property
    def u_floats(self) -> list:
        return [float(x) for x in self.u]

    def angle_denominators(self) -> list:
        """Denominators of the rational weights (lowest terms)."""
        if not self.rational:
            raise InvalidSpec("denominators are defined only for rational specs")
        return [Fraction(m).denominator for m in self.mu]


@dataclass(frozen=True)
class ODESystem:
    """Coefficient arrays of the two degree-r homogeneous polynomials.

    p_coeffs[j] multiplies x1^j x2^(r-j) in x1'; q_coeffs likewise in x2'.
    """

    r: int
    p_coeffs: tuple
    q_coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "p_coeffs", tuple(self.p_coeffs))
        object.__setattr__(self, "q_coeffs", tuple(self.q_coeffs))
        if len(self.p_coeffs) != self.r + 1 or len(self.q_coeffs) != self.r + 1:
            raise InvalidSpec("coefficient arrays must have length r+1")
        if self.q_coeffs[-1] != 1:
            raise InvalidSpec("q must be monic in x1 (coefficient of x1^r equal to 1)")

    def p_poly(self) -> RealPolynomial:
        return RealPolynomial(self.p_coeffs)

    def q_poly(self) -> RealPolynomial:
        return RealPolynomial(self.q_coeffs)

    @property
    def is_exact(self) -> bool:
        return all(_is_exact(c) for c in self.p_coeffs + self.q_coeffs)


def build_system(spec: BilliardSpec) -> ODESystem:
    """Explicit ODE system for a spec; exact for rational data."""
    r = spec.r
    exact = spec.rational and all(_is_exact(x) for x in spec.u)
    mu = list(spec.mu) if exact else spec.mu_floats
    u = list(spec.u) if exact else spec.u_floats

    s_poly = poly_from_roots(u)
    q_acc = None
    for a in range(r + 1):
        term = poly_from_roots([u[b] for b in range(r + 1) if b != a]).scale(mu[a])
        q_acc = term if q_acc is None else q_acc + term
    scale = Fraction(1, r - 1) if exact else 1.0 / (r - 1)
    q_coeffs = list(q_acc.scale(scale).coeffs)
    q_coeffs += [0 * q_coeffs[0]] * (r + 1 - len(q_coeffs))
    # the sum rule makes Q monic up to rounding; pin the leading coefficient
    one = Fraction(1) if exact else 1
    if abs(float(q_coeffs[r]) - 1.0) > SUM_RULE_TOL:
        raise InvalidSpec("weight sum rule violated while assembling Q")
    q_coeffs[r] = one
    # P = u Q - S truncated to degree r: the two monic leading terms cancel
    p_coeffs = [
        (q_coeffs[j - 1] if j > 0 else 0 * q_coeffs[0]) - s_poly.coeffs[j]
        for j in range(r + 1)
    ]
    return ODESystem(r, tuple(p_coeffs), tuple(q_coeffs))


def recover_spec(sys: ODESystem) -> BilliardSpec:
    """Inverse of build_system on the generic real-simple-root class."""
    r = sys.r
    q_poly = sys.q_poly()
    # S = u Q - P
    uq = RealPolynomial((0 * q_poly.coeffs[0],) + q_poly.coeffs)
    s_poly = uq + sys.p_poly().scale(-1)
    roots = real_simple_roots(s_poly)
    mu = partial_fraction_weights(q_poly, roots, r)
    return BilliardSpec(r, tuple(mu), tuple(roots))


def newtonian_system(k) -> ODESystem:
    """Degree-2 system equivalent to the complex point-particle law z'' = z^k."""
    if float(k) == 1.0:
        raise InvalidParameter("k = 1 is excluded (coefficient 2/(1-k) undefined)")
    c = Fraction(2, 1) / (1 - Fraction(k)) if _is_exact(k) else 2.0 / (1.0 - float(k))
    one = Fraction(1) if _is_exact(k) else 1.0
    zero = 0 * one
    return ODESystem(2, (zero, one, zero), (c, zero, one))


@dataclass(frozen=True)
class InitialCondition:
    """Normalized initial state: ratio u0, phase chi0, and the state itself."""

    u0: object  # Fraction | float | complex
    chi0: float
    x1: complex
    x2: complex

    @property
    def u0_complex(self) -> complex:
        return complex(self.u0)


def _u0_is_real(u0) -> bool:
    if isinstance(u0, complex):
        return clamp_to_real(u0).imag == 0.0
    return True


def _factor_logs(spec: BilliardSpec, u0, ctx: Context) -> list:
    """Backend logs of (u0 - u_a).

    Real u0 uses zero phases for every factor, so chi0 measures the launch
    angle against the boundary; non-real u0 uses principal branches with the
    real axis approached from above.
    """
    span = max(spec.u_floats) - min(spec.u_floats)
    logs = []
    if _u0_is_real(u0):
        u0r = u0.real if isinstance(u0, complex) else u0
        for a, ua in enumerate(spec.u):
            exact_hit = _is_exact(u0r) and _is_exact(ua) and u0r == ua
            if exact_hit or abs(float(u0r) - float(ua)) <= 1e-12 * max(span, 1.0):
                raise SingularInitial(f"u0 coincides with prevertex u_{a} = {ua}")
            if _is_exact(u0r) and _is_exact(ua):
                d = ctx.real(abs(Fraction(u0r) - Fraction(ua)))
            else:
                d = abs(ctx.real(u0r) - ctx.real(ua))
            logs.append(ctx.cplx(ctx.rlog(d), 0))
    else:
        z0 = ctx.cplx(u0.real, u0.imag)
        for ua in spec.u:
            logs.append(ctx.log_upper(z0 - ctx.real(ua)))
    return logs


def state_at(spec: BilliardSpec, u0, chi0: float, ctx: Context):
    """Backend-precision state (x1, x2) for the chart point (u0, chi0)."""
    with ctx:
        logs = _factor_logs(spec, u0, ctx)
        acc = ctx.zero
        for m, lg in zip(spec.mu, logs):
            acc = acc + ctx.real(m) * lg
        x2 = -ctx.expi(ctx.real(chi0)) * ctx.exp(-acc / (spec.r - 1))
        if _u0_is_real(u0):
            u0r = u0.real if isinstance(u0, complex) else u0
            x1 = ctx.real(u0r) * x2
        else:
            x1 = ctx.cplx(u0.real, u0.imag) * x2
        return x1, x2


def state_from(spec: BilliardSpec, u0, chi0: float) -> InitialCondition:
    """Initial condition with |C| = 1 for the chart point (u0, chi0)."""
    ctx = Context()
    x1, x2 = state_at(spec, u0, chi0, ctx)
    return InitialCondition(u0, float(chi0) % (2 * math.pi), complex(x1), complex(x2))


def conserved_modulus(spec: BilliardSpec, x1: complex, x2: complex) -> float:
    """|C| = prod |x1 - u_a x2|^(mu_a/(r-1)); flow-invariant, 1 when normalized."""
    acc = 0.0
    for m, ua in zip(spec.mu_floats, spec.u_floats):
        acc += m * math.log(abs(x1 - ua * x2))
    return math.exp(acc / (spec.r - 1))


def normalize_initial(spec: BilliardSpec, x1: complex, x2: complex) -> InitialCondition:
    """Rescale a state onto the |C| = 1 shell and read off its chart point."""
    if x2 == 0:
        raise SingularInitial("x2 = 0 is a map-pole state, not a valid start")
    u0 = clamp_to_real(complex(x1) / complex(x2))
    if u0.imag == 0.0:
        u0 = u0.real
    ctx = Context()
    logs = _factor_logs(spec, u0, ctx)
    acc = sum((m * lg for m, lg in zip(spec.mu_floats, logs)), 0j)
    c_val = complex(x2) * cmath.exp(acc / (spec.r - 1))
    lam = 1.0 / abs(c_val)
    chi0 = arg_upper(-c_val / abs(c_val)) % (2 * math.pi)
    return InitialCondition(u0, chi0, lam * complex(x1), lam * complex(x2))


# -- JSON spec files ---------------------------------------------------------

def _num_to_json(x):
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)
    if isinstance(x, int):
        return str(x)
    return float(x)


def _num_from_json(v):
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, (int, float)):
        return v if isinstance(v, float) else Fraction(v)
    raise InvalidSpec(f"cannot parse number {v!r}")


def spec_to_json(spec: BilliardSpec, init: InitialCondition | None = None) -> dict:
    out = {
        "r": spec.r,
        "mu": [_num_to_json(m) for m in spec.mu],
        "u": [_num_to_json(x) for x in spec.u],
    }
    if init is not None:
        u0 = complex(init.u0)
        out["u0"] = [_num_to_json(init.u0) if u0.imag == 0 else u0.real, u0.imag]
        out["chi0"] = init.chi0
    return out


def spec_from_json(d: dict):
    """Parse a spec file dict -> (spec, u0 | None, chi0 | None)."""
    try:
        r = int(d["r"])
        mu = tuple(_num_from_json(v) for v in d["mu"])
        u = tuple(_num_from_json(v) for v in d["u"])
    except (KeyError, ValueError, TypeError) as exc:
        raise InvalidSpec(f"malformed spec object: {exc}") from exc
    spec = BilliardSpec(r, mu, u)
    u0 = None
    if "u0" in d:
        raw = d["u0"]
        if isinstance(raw, (list, tuple)):
            re, im = _num_from_json(raw[0]), float(raw[1])
            u0 = complex(float(re), im) if im != 0.0 else re
        else:
            u0 = _num_from_json(raw)
    chi0 = float(d["chi0"]) if "chi0" in d else None
    return spec, u0, chi0
