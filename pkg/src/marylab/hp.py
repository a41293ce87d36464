"""Helpers around gmpy2's MPFR arithmetic.

All high-precision code in the package routes through these functions.  Values
that need provenance carry a plain-float error radius alongside the mpfr; the
helpers here keep reductions exact (boosted working precision) so the radius
is dominated by the inputs, not by the bookkeeping.
"""

from __future__ import annotations

from fractions import Fraction

import gmpy2
from gmpy2 import mpfr

DEFAULT_PRECISION = 256


def ctx(bits: int):
    """A gmpy2 context manager with the given mantissa precision."""
    return gmpy2.context(precision=bits)


def to_mpfr(x, bits: int = DEFAULT_PRECISION) -> mpfr:
    """Convert int/float/str/Fraction/mpfr to an mpfr rounded at `bits`."""
    with ctx(bits):
        if isinstance(x, Fraction):
            return mpfr(x.numerator) / mpfr(x.denominator)
        return mpfr(x)


def ulp_of(x) -> float:
    """Magnitude of one unit in the last place of x (0 for exact zero)."""
    if not isinstance(x, mpfr):
        x = mpfr(x)  # floats/ints convert exactly
    if gmpy2.is_zero(x):
        return 0.0
    exp = gmpy2.get_exp(x)
    return 2.0 ** max(exp - x.precision, -1060)


def frac1(x: mpfr) -> mpfr:
    """Fractional part of x in [0, 1), exact at the precision of x."""
    with ctx(max(x.precision + 8, gmpy2.get_exp(x) + x.precision + 8)):
        return x - gmpy2.floor(x)


def signed_frac(x: mpfr) -> mpfr:
    """Representative of x mod 1 in (-1/2, 1/2]."""
    f = frac1(x)
    if f > Fraction(1, 2):
        with ctx(f.precision + 8):
            return f - 1
    return f


def dist_to_int(x: mpfr) -> mpfr:
    """Distance from x to the nearest integer (the torus norm ||x||)."""
    return abs(signed_frac(x))


def mul_mod1(k: int, x: mpfr, x_err: float = 0.0) -> tuple[mpfr, float]:
    """k*x mod 1 in [0, 1), with the propagated error radius.

    The product and reduction are carried out with enough guard bits that the
    only error left is |k| * x_err plus one final rounding.
    """
    bits = x.precision
    work = bits + max(abs(k), 1).bit_length() + 8
    with ctx(work):
        t = mpfr(k) * x
        f = t - gmpy2.floor(t)
        if f >= 1:  # only possible through rounding at the boundary
            f = f - 1
        if f < 0:
            f = f + 1
    with ctx(bits):
        out = +f
    err = abs(k) * x_err + ulp_of(out)
    return out, err


def sinpi(x: mpfr) -> mpfr:
    """sin(pi x) with relative accuracy preserved near the zeros."""
    bits = x.precision
    with ctx(bits + 16 + max(0, gmpy2.get_exp(x))):
        r = x - gmpy2.rint(x)  # r in [-1/2, 1/2], subtraction exact
        k = int(gmpy2.rint(x))
        s = gmpy2.sin(gmpy2.const_pi() * r)
        if k % 2:
            s = -s
    with ctx(bits):
        return +s


def cospi(x: mpfr) -> mpfr:
    """cos(pi x) with relative accuracy preserved near the zeros."""
    bits = x.precision
    with ctx(bits + 16 + max(0, gmpy2.get_exp(x))):
        # cos(pi x) = (-1)^k sin(pi (1/2 + k - x)) with k chosen so the
        # argument of sin is in [-1/2, 1/2] -- the zero at half-integers
        # becomes the well-conditioned zero of sin.
        y = gmpy2.mpfr("0.5") - x
        r = y - gmpy2.rint(y)
        k = int(gmpy2.rint(y))
        c = gmpy2.sin(gmpy2.const_pi() * r)
        if k % 2:
            c = -c
    with ctx(bits):
        return +c


def tanpi(x: mpfr) -> mpfr:
    """tan(pi x) via the accurate sinpi/cospi pair."""
    bits = x.precision
    with ctx(bits):
        return sinpi(x) / cospi(x)


def log_abs(x: mpfr) -> mpfr:
    """ln|x| at the precision of x."""
    with ctx(x.precision):
        return gmpy2.log(abs(x))
