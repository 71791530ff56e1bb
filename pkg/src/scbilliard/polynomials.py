"""Univariate polynomial algebra over exact rationals or floats.

Coefficients are ascending.  A polynomial built from Fraction data stays
exact through construction, evaluation at rational points, derivative, and
residue extraction; float data follows the same code paths in hardware
arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import sympy

from .errors import ComplexRoots, DegenerateResidue, DuplicateRoot, MultipleRoots


def _is_exact(x) -> bool:
    return isinstance(x, (Fraction, int))


@dataclass(frozen=True)
class RealPolynomial:
    """Real-coefficient polynomial, coefficients ascending by degree."""

    coeffs: tuple

    def __post_init__(self):
        c = tuple(self.coeffs) if self.coeffs else (0,)
        # strip trailing zeros, keep the constant term
        n = len(c)
        while n > 1 and c[n - 1] == 0:
            n -= 1
        object.__setattr__(self, "coeffs", c[:n])

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_monic(self) -> bool:
        return self.coeffs[-1] == 1

    @property
    def is_exact(self) -> bool:
        return all(_is_exact(c) for c in self.coeffs)

    def __call__(self, z):
        """Horner evaluation; exact when coefficients and z are rational."""
        acc = self.coeffs[-1]
        for c in reversed(self.coeffs[:-1]):
            acc = acc * z + c
        return acc

    def deriv(self) -> "RealPolynomial":
        if self.degree == 0:
            return RealPolynomial((0 * self.coeffs[0],))
        return RealPolynomial(tuple(k * c for k, c in enumerate(self.coeffs) if k > 0))

    def __mul__(self, other: "RealPolynomial") -> "RealPolynomial":
        a, b = self.coeffs, other.coeffs
        out = [0 * (a[0] * b[0])] * (len(a) + len(b) - 1)
        for i, x in enumerate(a):
            for j, y in enumerate(b):
                out[i + j] = out[i + j] + x * y
        return RealPolynomial(tuple(out))

    def __add__(self, other: "RealPolynomial") -> "RealPolynomial":
        a, b = list(self.coeffs), list(other.coeffs)
        if len(a) < len(b):
            a, b = b, a
        for i, y in enumerate(b):
            a[i] = a[i] + y
        return RealPolynomial(tuple(a))

    def scale(self, s) -> "RealPolynomial":
        return RealPolynomial(tuple(s * c for c in self.coeffs))

    def as_floats(self) -> tuple:
        return tuple(float(c) for c in self.coeffs)


def poly_from_roots(roots) -> RealPolynomial:
    """Monic polynomial with the given real zeros.

    Raises DuplicateRoot when two roots coincide (exactly for rational input,
    within 1e-12 of the root span for floats).
    """
    roots = list(roots)
    if len(roots) >= 2:
        if all(_is_exact(x) for x in roots):
            if len(set(roots)) != len(roots):
                raise DuplicateRoot("coinciding rational roots")
        else:
            span = max(float(x) for x in roots) - min(float(x) for x in roots)
            srt = sorted(float(x) for x in roots)
            gap = min(b - a for a, b in zip(srt, srt[1:]))
            if gap <= 1e-12 * max(span, 1.0):
                raise DuplicateRoot(f"root gap {gap:g} below tolerance")
    one = Fraction(1) if all(_is_exact(x) for x in roots) else 1.0
    coeffs = [one]
    for rt in roots:
        coeffs = [0 * one] + coeffs
        for i in range(len(coeffs) - 1):
            coeffs[i] = coeffs[i] - rt * coeffs[i + 1]
    return RealPolynomial(tuple(coeffs))


def partial_fraction_weights(q: RealPolynomial, roots, r: int) -> list:
    """Residue weights of (r-1) q/S over the simple zeros of S.

    S is the monic polynomial with the given roots; each weight is
    (r-1) q(u_a) / S'(u_a).  Exact for rational inputs.
    """
    s = poly_from_roots(roots)
    sp = s.deriv()
    out = []
    for u in roots:
        d = sp(u)
        if d == 0:
            raise DegenerateResidue(f"S'({u}) = 0")
        out.append((r - 1) * q(u) / d)
    return out


def eval_poly(p: RealPolynomial, z):
    """Horner evaluation of p at z (alias for p(z))."""
    return p(z)


def real_simple_roots(p: RealPolynomial) -> list:
    """All roots of p, required real and simple, ascending.

    Rational-coefficient input is factored exactly (rational roots come back
    as Fractions, real algebraic ones as floats).  Float input goes through
    numpy with Newton polish.  Raises MultipleRoots / ComplexRoots when the
    root structure falls outside the real-simple class.
    """
    if p.degree < 1:
        return []
    if p.is_exact:
        x = sympy.Symbol("x")
        poly = sympy.Poly(list(reversed([sympy.Rational(c) for c in p.coeffs])), x)
        if sympy.degree(sympy.gcd(poly, poly.diff(x)), x) > 0:
            raise MultipleRoots("repeated factor in S")
        rroots = poly.real_roots()
        if len(rroots) != p.degree:
            raise ComplexRoots(f"{p.degree - len(rroots)} non-real roots")
        out = []
        for rt in rroots:
            if rt.is_Rational:
                out.append(Fraction(int(rt.p), int(rt.q)))
            else:
                out.append(float(rt.evalf(30)))
        return out

    coeffs = np.array(p.as_floats()[::-1], dtype=float)
    raw = np.roots(coeffs)
    # Newton polish in complex arithmetic
    dcoeffs = np.polyder(coeffs)
    for _ in range(4):
        fv = np.polyval(coeffs, raw)
        dv = np.polyval(dcoeffs, raw)
        ok = np.abs(dv) > 0
        raw = np.where(ok, raw - fv / np.where(ok, dv, 1.0), raw)
    scale = 1.0 + np.max(np.abs(raw))
    if np.any(np.abs(raw.imag) > 1e-9 * scale):
        raise ComplexRoots("non-real roots in S")
    roots = np.sort(raw.real)
    if len(roots) >= 2:
        span = max(roots[-1] - roots[0], 1.0)
        if np.min(np.diff(roots)) <= 1e-10 * span:
            raise MultipleRoots("nearly coinciding roots in S")
    return [float(v) for v in roots]
