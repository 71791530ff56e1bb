"""Precision backend shared by the integrator and initial-state construction.

Two interchangeable arithmetics: hardware ``complex`` for precision_digits <= 16
and gmpy2 multiprecision above that.  Algorithms are written against plain
Python operators; a :class:`Context` only supplies construction, conversion,
and the handful of transcendental calls both backends provide.
"""

from __future__ import annotations

import cmath
import math
from fractions import Fraction

import gmpy2

HARDWARE_DIGITS = 16

# arg of values this close to the negative real axis (relative) is taken as +pi,
# i.e. the limit from the upper half-plane
_REAL_AXIS_CLAMP = 1e-12


def clamp_to_real(z: complex, tol: float = _REAL_AXIS_CLAMP) -> complex:
    """Snap a tiny imaginary part (either sign) to exactly zero."""
    if z.imag != 0.0 and abs(z.imag) <= tol * (1.0 + abs(z)):
        return complex(z.real, 0.0)
    return z


def arg_upper(z: complex) -> float:
    """Principal argument with real z read as the limit z + i0+.

    Negative reals get +pi.  Values within the clamp band below the axis are
    treated as real, which keeps branch choices stable for orbits sampled
    exactly on the axis.
    """
    z = clamp_to_real(z)
    if z.imag == 0.0:
        return 0.0 if z.real >= 0.0 else math.pi
    return math.atan2(z.imag, z.real)


def log_upper(z: complex) -> complex:
    """log with the arg_upper branch."""
    z = clamp_to_real(z)
    return complex(math.log(abs(z)), arg_upper(z))


class Context:
    """Arithmetic backend selected by decimal precision.

    For ``digits <= 16`` all values are Python float/complex.  Otherwise
    values are gmpy2 mpfr/mpc created at ``digits`` plus a guard margin.
    Entering the context (``with ctx:``) installs the matching gmpy2
    global precision; gmpy2 arithmetic inside must run under it.
    """

    def __init__(self, digits: int = HARDWARE_DIGITS):
        if digits < 15:
            raise ValueError("precision_digits must be >= 15")
        self.digits = digits
        self.is_mp = digits > HARDWARE_DIGITS
        self.prec_bits = int(math.ceil((digits + 8) * math.log2(10)))
        self._ctx_stack = []

    # -- context management ------------------------------------------------
    def __enter__(self):
        if self.is_mp:
            self._ctx_stack.append(gmpy2.get_context())
            gmpy2.set_context(gmpy2.context(precision=self.prec_bits))
        return self

    def __exit__(self, *exc):
        if self.is_mp:
            gmpy2.set_context(self._ctx_stack.pop())
        return False

    # -- constructors --------------------------------------------------------
    def real(self, x):
        """Backend real from int, float, str, or Fraction (exact for Fraction)."""
        if not self.is_mp:
            return float(x)
        if isinstance(x, Fraction):
            return gmpy2.mpfr(x.numerator) / gmpy2.mpfr(x.denominator)
        if isinstance(x, str):
            return gmpy2.mpfr(x)
        return gmpy2.mpfr(x)

    def cplx(self, re, im=0):
        if not self.is_mp:
            return complex(float(re), float(im))
        return gmpy2.mpc(self.real(re), self.real(im))

    def from_complex(self, z: complex):
        return self.cplx(z.real, z.imag)

    @property
    def zero(self):
        return 0j if not self.is_mp else gmpy2.mpc(0)

    @property
    def pi(self):
        return math.pi if not self.is_mp else gmpy2.const_pi()

    # -- conversions ---------------------------------------------------------
    @staticmethod
    def to_complex(z) -> complex:
        return complex(z)

    @staticmethod
    def to_float(x) -> float:
        return float(x)

    # -- functions -----------------------------------------------------------
    def exp(self, z):
        return cmath.exp(z) if not self.is_mp else gmpy2.exp(z)

    def log(self, z):
        return cmath.log(z) if not self.is_mp else gmpy2.log(z)

    def rlog(self, x):
        """Real log of a positive backend real."""
        return math.log(x) if not self.is_mp else gmpy2.log(x)

    def rexp(self, x):
        """Real exp of a backend real."""
        return math.exp(x) if not self.is_mp else gmpy2.exp(x)

    def sqrt(self, x):
        return math.sqrt(x) if not self.is_mp else gmpy2.sqrt(x)

    def expi(self, theta):
        """exp(i theta) for a backend real theta."""
        if not self.is_mp:
            return complex(math.cos(theta), math.sin(theta))
        return gmpy2.mpc(gmpy2.cos(theta), gmpy2.sin(theta))

    def powr(self, x, e):
        """x**e for backend reals x > 0 and real exponent e."""
        if not self.is_mp:
            return math.pow(x, e)
        return gmpy2.exp(gmpy2.mpfr(e) * gmpy2.log(x))

    def log_upper(self, z):
        """log with arg_upper branch, at backend precision."""
        if not self.is_mp:
            return log_upper(z)
        re, im = gmpy2.mpfr(z.real), gmpy2.mpfr(z.imag)
        mag = abs(z)
        if im != 0 and abs(im) <= _REAL_AXIS_CLAMP * (1 + mag):
            im = gmpy2.mpfr(0)
        if im == 0:
            arg = gmpy2.mpfr(0) if re >= 0 else gmpy2.const_pi()
        else:
            arg = gmpy2.atan2(im, re)
        return gmpy2.mpc(gmpy2.log(mag), arg)


def as_float(x) -> float:
    """float() that also accepts Fractions and gmpy2 types."""
    return float(x)
