"""Continued fractions, frequencies, and torus points.

A Frequency carries the certified partial quotients a_1..a_K of alpha in
(0,1), the convergents p_k/q_k, an exact rational representative, and a
rounded value at the configured precision.  All deeper arithmetic (resonance
indices, phase shifts theta + k*alpha) builds on this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr

from . import hp
from .errors import IndexOutOfRange, PrecisionExhausted

__all__ = [
    "Frequency",
    "TorusPoint",
    "expand",
    "norm_dist",
    "beta_n",
    "beta_estimate",
    "golden_mean",
    "sqrt2_minus_one",
    "synthetic_liouville",
]


def _as_fraction(x, precision_bits: int) -> Fraction:
    """Exact rational content of x (str/Fraction/int exact; mpfr/float dyadic)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    if isinstance(x, mpfr):
        num, den = x.as_integer_ratio()
        return Fraction(int(num), int(den))
    raise TypeError(f"cannot take {type(x).__name__} as a frequency value")


def _expand_tracked(x: Fraction, rad: Fraction, depth: int) -> list[int]:
    """Partial quotients of x with a propagated uncertainty radius.

    Remainders are kept exact; `rad` is the radius of values indistinguishable
    from x at the working precision, magnified by the reciprocal at each step.
    Once the radius reaches half the remainder the next quotient could be
    anything, so we stop rather than emit it.
    """
    quots: list[int] = []
    r = x
    for step in range(depth):
        if r == 0:
            raise PrecisionExhausted(
                f"expansion terminates (rational value) before a_{step + 1}"
            )
        if 2 * rad >= r:
            raise PrecisionExhausted(
                f"quotient a_{step + 1} is uncertain at the working precision"
            )
        inv = 1 / r
        a = math.floor(inv)
        quots.append(int(a))
        rad = rad / (r * (r - rad))
        r = inv - a
    return quots


def _convergents(quots: list[int]) -> tuple[list[int], list[int]]:
    """p_0..p_K and q_0..q_K for the quotient list (p_0, q_0) = (0, 1)."""
    p = [0]
    q = [1]
    pm, qm = 1, 0  # (p_{-1}, q_{-1})
    for a in quots:
        p.append(a * p[-1] + pm)
        q.append(a * q[-1] + qm)
        pm, qm = p[-2], q[-2]
    return p, q


class Frequency:
    """An irrational-type frequency alpha in (0,1) with certified expansion.

    Construct via `expand` (from a value) or `Frequency.from_quotients`
    (synthetic, from exact integer data).  Instances are immutable.
    """

    __slots__ = ("partial_quotients", "precision_bits", "value", "value_error",
                 "exact", "_p", "_q", "_origin", "_origin_depth")

    def __init__(self, quotients, precision_bits, exact, value_error=0.0,
                 origin="quotients", origin_depth=None):
        quotients = tuple(int(a) for a in quotients)
        if not quotients or any(a < 1 for a in quotients):
            raise ValueError("partial quotients must be positive integers")
        if precision_bits < 8:
            raise ValueError("precision_bits must be at least 8")
        self.partial_quotients = quotients
        self.precision_bits = int(precision_bits)
        self.exact = exact
        p, q = _convergents(list(quotients))
        self._p = tuple(p)
        self._q = tuple(q)
        self.value = hp.to_mpfr(exact, self.precision_bits)
        self.value_error = float(value_error) + hp.ulp_of(self.value)
        self._origin = origin
        self._origin_depth = origin_depth
        self._check_invariants()

    # -- construction ------------------------------------------------------

    @classmethod
    def from_quotients(cls, quotients, precision_bits: int = hp.DEFAULT_PRECISION):
        """Synthetic frequency from prescribed partial quotients.

        The exact representative extends the list with two tail quotients of 1
        so that ||q_k alpha|| > 0 at every stored scale; all quantities at the
        stored scales are insensitive to the (unspecified) deeper tail.
        """
        quotients = [int(a) for a in quotients]
        p, q = _convergents(quotients + [1, 1])
        exact = Fraction(p[-1], q[-1])
        return cls(quotients, precision_bits, exact, origin="quotients")

    @property
    def depth(self) -> int:
        return len(self.partial_quotients)

    @property
    def convergents(self) -> list[tuple[int, int]]:
        return [(self._p[k], self._q[k]) for k in range(1, self.depth + 1)]

    def a(self, k: int) -> int:
        """Partial quotient a_k, 1-based."""
        if not 1 <= k <= self.depth:
            raise IndexOutOfRange(f"a_{k} not stored (depth {self.depth})")
        return self.partial_quotients[k - 1]

    def p(self, k: int) -> int:
        if not 0 <= k <= self.depth:
            raise IndexOutOfRange(f"p_{k} not stored (depth {self.depth})")
        return self._p[k]

    def q(self, k: int) -> int:
        if not 0 <= k <= self.depth:
            raise IndexOutOfRange(f"q_{k} not stored (depth {self.depth})")
        return self._q[k]

    # -- exact arithmetic ----------------------------------------------------

    def dist_to_int_exact(self, n: int) -> Fraction:
        """||n alpha|| for the exact rational representative, as a Fraction."""
        x = n * self.exact
        f = x - math.floor(x)
        return min(f, 1 - f)

    def conv_dist_exact(self, k: int) -> Fraction:
        """Convergent distance |q_k alpha - p_k|, exact.

        Equals ||q_k alpha|| for k >= 1; at k = 0 it is alpha itself (the
        convention under which the quotient recurrence for the distances
        holds at every index).
        """
        if not 0 <= k <= self.depth:
            raise IndexOutOfRange(f"convergent {k} not stored (depth {self.depth})")
        return abs(self._q[k] * self.exact - self._p[k])

    # -- high-precision arithmetic -------------------------------------------

    def times_mod1(self, k: int) -> tuple[mpfr, float]:
        """k*alpha mod 1 in [0,1) with propagated error radius."""
        return hp.mul_mod1(k, self.value, self.value_error)

    def shift(self, theta: "TorusPoint", k: int) -> "TorusPoint":
        """theta + k*alpha mod 1 as a TorusPoint with propagated error."""
        if k == 0:
            return theta
        ka, ka_err = self.times_mod1(k)
        bits = max(theta.value.precision, self.precision_bits)
        with hp.ctx(bits + 8):
            s = theta.value + ka
            if s >= 1:
                s = s - 1
        with hp.ctx(bits):
            v = +s
        if v >= 1:
            v = hp.to_mpfr(0, bits)  # rounded up across the boundary
        return TorusPoint(v, theta.error_bound + ka_err + hp.ulp_of(v))

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        if self._origin == "decimal":
            num, den = self.exact.numerator, self.exact.denominator
            e2 = (den & -den).bit_length() - 1  # factor 2**e2
            rest = den >> e2
            e5 = 0
            while rest % 5 == 0:
                rest //= 5
                e5 += 1
            if rest == 1:  # terminating decimal: serialize exactly
                shift = max(e2, e5)
                digits = num * 10**shift // den
                s = str(digits).rjust(shift + 1, "0")
                dec = (s[:-shift] + "." + s[-shift:]) if shift else s
                return {"decimal": dec, "precision_bits": self.precision_bits,
                        "depth": self._origin_depth or self.depth}
        return {"quotients": list(self.partial_quotients),
                "precision_bits": self.precision_bits}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Frequency":
        bits = int(doc.get("precision_bits", hp.DEFAULT_PRECISION))
        if "quotients" in doc:
            return cls.from_quotients(doc["quotients"], bits)
        if "decimal" in doc:
            depth = int(doc.get("depth", 20))
            return expand(doc["decimal"], depth, precision_bits=bits)
        raise ValueError("frequency document needs 'quotients' or 'decimal'")

    # -- internals ----------------------------------------------------------

    def _check_invariants(self) -> None:
        p, q, a = self._p, self._q, self.partial_quotients
        K = self.depth
        for k in range(1, K):
            if q[k + 1] != a[k] * q[k] + q[k - 1]:
                raise ValueError("convergent recurrence violated")
        for k in range(1, K + 1):
            if math.gcd(p[k], q[k]) != 1:
                raise ValueError(f"p_{k}/q_{k} not in lowest terms")
        for k in range(2, K):
            if q[k + 1] <= q[k]:
                raise ValueError("q_k not strictly increasing")
        for k in range(K):  # two-sided distance bound, exact
            d = self.conv_dist_exact(k)
            if not (Fraction(1, 2 * q[k + 1]) <= d <= Fraction(1, q[k + 1])):
                raise ValueError(f"convergent distance bound fails at k={k}")

    def __repr__(self) -> str:
        head = ",".join(str(a) for a in self.partial_quotients[:6])
        tail = ",..." if self.depth > 6 else ""
        return f"Frequency([{head}{tail}], depth={self.depth}, bits={self.precision_bits})"

    def __eq__(self, other):
        return (isinstance(other, Frequency)
                and self.partial_quotients == other.partial_quotients
                and self.precision_bits == other.precision_bits
                and self.exact == other.exact)

    def __hash__(self):
        return hash((self.partial_quotients, self.precision_bits, self.exact))


@dataclass(frozen=True)
class TorusPoint:
    """A point of R/Z held at high precision with an accumulated error radius."""

    value: mpfr
    error_bound: float = 0.0

    def __post_init__(self):
        if not (0 <= self.value < 1):
            raise ValueError("TorusPoint value must be reduced to [0, 1)")
        if self.error_bound < 0:
            raise ValueError("error_bound must be nonnegative")

    @classmethod
    def make(cls, x, precision_bits: int = hp.DEFAULT_PRECISION,
             error: float | None = None) -> "TorusPoint":
        if isinstance(x, TorusPoint):
            return x
        if isinstance(x, (str, Fraction, int)):
            exact = Fraction(x) if not isinstance(x, Fraction) else x
            exact -= math.floor(exact)
            v = hp.to_mpfr(exact, precision_bits)
            err = hp.ulp_of(v) if error is None else error
            return cls(v, err)
        v = hp.frac1(hp.to_mpfr(x, precision_bits))
        with hp.ctx(precision_bits):
            v = +v
        err = hp.ulp_of(v) if error is None else error
        return cls(v, float(err))

    @property
    def precision_bits(self) -> int:
        return self.value.precision

    def dist_to_half(self) -> mpfr:
        """||value - 1/2||, the distance to the potential singularity."""
        with hp.ctx(self.value.precision + 8):
            return hp.dist_to_int(self.value - Fraction(1, 2))


def expand(x, depth: int, precision_bits: int = hp.DEFAULT_PRECISION,
           error: float | None = None) -> Frequency:
    """Continued-fraction expansion of x in (0,1) to `depth` quotients.

    `error` is the caller's radius of uncertainty around x; it defaults to one
    ulp for float/mpfr input and 0 for exact input (str/Fraction/int).  The
    working radius is never taken below 2^-precision_bits, so lowering
    precision_bits makes deep quotients unreachable (PrecisionExhausted) even
    for exactly specified values.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    exact = _as_fraction(x, precision_bits)
    if error is None:
        error = hp.ulp_of(x) if isinstance(x, (float, mpfr)) else 0.0
    if not (0 < exact < 1):
        raise ValueError("expand needs 0 < x < 1")
    rad = max(Fraction(error), Fraction(1, 2**precision_bits))
    quots = _expand_tracked(exact, rad, depth)
    return Frequency(quots, precision_bits, exact, value_error=float(error),
                     origin="decimal", origin_depth=depth)


def norm_dist(x) -> mpfr:
    """Distance from x to the nearest integer, ||x|| in [0, 1/2]."""
    if isinstance(x, TorusPoint):
        with hp.ctx(x.value.precision):
            return min(x.value, 1 - x.value)
    v = x if isinstance(x, mpfr) else hp.to_mpfr(x)
    return hp.dist_to_int(v)


def beta_n(f: Frequency, n: int) -> float:
    """Scale exponent ln(q_{n+1}) / q_n."""
    if not 0 <= n <= f.depth - 1:
        raise IndexOutOfRange(f"beta_{n} needs q_{n + 1} (depth {f.depth})")
    return math.log(f.q(n + 1)) / f.q(n)


def beta_estimate(f: Frequency, n_min: int = 1) -> float:
    """Finite-depth lower proxy for beta = limsup beta_n: max over stored n >= n_min."""
    top = f.depth - 1
    if top < n_min:
        raise IndexOutOfRange("no stored scales at or above n_min")
    return max(beta_n(f, n) for n in range(n_min, top + 1))


def golden_mean(depth: int = 40, precision_bits: int = hp.DEFAULT_PRECISION) -> Frequency:
    """(sqrt(5)-1)/2 expanded to `depth` quotients (all equal to 1)."""
    with hp.ctx(precision_bits):
        x = (gmpy2.sqrt(mpfr(5)) - 1) / 2
    return expand(x, depth, precision_bits=precision_bits)


def sqrt2_minus_one(depth: int = 30, precision_bits: int = hp.DEFAULT_PRECISION) -> Frequency:
    """sqrt(2)-1 expanded to `depth` quotients (all equal to 2)."""
    with hp.ctx(precision_bits):
        x = gmpy2.sqrt(mpfr(2)) - 1
    return expand(x, depth, precision_bits=precision_bits)


def synthetic_liouville(tail_scales: int = 26,
                        precision_bits: int = 384) -> Frequency:
    """A frequency with a_{k+1} = ceil(e^{q_k}) on the first scales.

    The doubly exponential growth makes deeper such quotients impossible to
    hold as exact integers (q_4 ~ 1e98 already), so the strong scales are
    n = 1, 2, 3 and the expansion continues with quotient 1 afterwards.
    """
    quots = [1]
    p, q = _convergents(quots)
    while True:
        qn = q[-1]
        if qn > 250:
            break
        with hp.ctx(max(64, int(qn * 1.5) + 64)):
            a_next = int(gmpy2.ceil(gmpy2.exp(mpfr(qn))))
        quots.append(a_next)
        p, q = _convergents(quots)
    quots.extend([1] * tail_scales)
    return Frequency.from_quotients(quots, precision_bits)
