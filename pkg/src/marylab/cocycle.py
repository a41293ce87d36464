"""Transfer matrices, determinants and Lyapunov exponents for the tangent
potential.

The one-step matrix A(theta) = [[E - lambda*tan(pi theta), -1], [1, 0]] maps
(phi(k), phi(k-1)) to (phi(k+1), phi(k)) but blows up at the poles of tan, so
long products are computed for the regularized step
F(theta) = cos(pi theta) * A(theta), whose entries are bounded by |E| + lambda.
A-products are recovered from F-products by dividing out the product of
cosines, carried as a separate signed log.  All magnitudes live in log space:
matrices as (unit-band matrix, log scale) pairs, determinants as (sign, log)
pairs, so nothing here overflows for any product length.

Hot paths (ordered products, phase streams) go through the kernel backends;
the determinant recurrences run at the precision of the supplied phase, which
keeps the defining identities between the two determinant families testable
at tolerances far below double rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import gmpy2
import numpy as np
from gmpy2 import mpfr

from . import backends, hp
from .cf import Frequency, TorusPoint
from .errors import SingularSite

LN2 = math.log(2.0)

_BAND_LO = 0.5
_BAND_HI = 2.0


# -- domain types -----------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Coupling, energy, frequency and phase of one operator instance.

    lam must be positive.  Phases of individual sites can still sit on the
    pole of the tangent; that is surfaced lazily (SingularSite) by the
    operations that actually need the singular step.
    """

    lam: float
    E: float
    alpha: Frequency
    theta: TorusPoint

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("coupling lam must be positive")
        if not isinstance(self.theta, TorusPoint):
            object.__setattr__(
                self, "theta",
                TorusPoint.make(self.theta, self.alpha.precision_bits))

    def site(self, k: int) -> TorusPoint:
        """Phase theta + k*alpha of site k, with propagated error radius."""
        return self.alpha.shift(self.theta, k)

    def shifted(self, k: int) -> "ModelParams":
        """The same operator seen from site k (theta replaced by theta_k)."""
        return ModelParams(self.lam, self.E, self.alpha, self.site(k))


class SignedLog(NamedTuple):
    """A real number as (sign, ln|value|); sign 0 encodes exact zero."""

    sign: int
    log: float

    def to_float(self) -> float:
        return 0.0 if self.sign == 0 else self.sign * math.exp(self.log)


class DetPair(NamedTuple):
    """Consecutive box determinants (P_k, P_{k-1}) in signed-log form."""

    k: int
    cur: SignedLog
    prev: SignedLog


@dataclass(frozen=True)
class ScaledMatrix:
    """A 2x2 real matrix as exp(log_scale) * m with m kept in a unit band.

    The largest entry magnitude of m stays in [1/2, 2] (the zero matrix is
    the one exception), so multiplying any number of these never leaves the
    range of doubles; only log_scale grows.
    """

    m: np.ndarray
    log_scale: float

    def __post_init__(self):
        top = float(np.abs(self.m).max())
        if top != 0.0 and not _BAND_LO <= top <= _BAND_HI:
            raise ValueError("matrix part outside the normalization band")

    @classmethod
    def wrap(cls, a, log_scale: float = 0.0) -> "ScaledMatrix":
        """Normalize an arbitrary 2x2 array into the band."""
        a = np.asarray(a, dtype=np.float64)
        top = float(np.abs(a).max())
        if top == 0.0:
            return cls(a.copy(), 0.0)
        if _BAND_LO <= top <= _BAND_HI:
            return cls(a.copy(), float(log_scale))
        return cls(a / top, float(log_scale) + math.log(top))

    @classmethod
    def identity(cls) -> "ScaledMatrix":
        return cls(np.eye(2), 0.0)

    def value(self) -> np.ndarray:
        """The represented matrix as a plain array (may overflow for large
        log_scale; prefer log-space accessors in that regime)."""
        return math.exp(self.log_scale) * self.m

    def __matmul__(self, other: "ScaledMatrix") -> "ScaledMatrix":
        return ScaledMatrix.wrap(self.m @ other.m,
                                 self.log_scale + other.log_scale)

    def norm_log(self) -> float:
        """ln of the spectral norm of the represented matrix."""
        return self.log_scale + math.log(float(np.linalg.norm(self.m, 2)))

    def entry(self, i: int, j: int) -> SignedLog:
        v = float(self.m[i, j])
        if v == 0.0:
            return SignedLog(0, float("-inf"))
        return SignedLog(1 if v > 0 else -1,
                         self.log_scale + math.log(abs(v)))

    def det_signed_log(self) -> SignedLog:
        """Determinant from the stored entries.

        The 2x2 cross difference is computed in doubles, so this loses all
        accuracy once |det m| falls below ~1e-16; long F-products are in that
        regime and their determinant should be taken from the cosine log-sum
        instead.
        """
        d = float(self.m[0, 0] * self.m[1, 1] - self.m[0, 1] * self.m[1, 0])
        if d == 0.0:
            return SignedLog(0, float("-inf"))
        return SignedLog(1 if d > 0 else -1,
                         2.0 * self.log_scale + math.log(abs(d)))

    def adjugate(self) -> "ScaledMatrix":
        a, b, c, d = (float(self.m[0, 0]), float(self.m[0, 1]),
                      float(self.m[1, 0]), float(self.m[1, 1]))
        return ScaledMatrix.wrap(np.array([[d, -b], [-c, a]]), self.log_scale)


# -- single steps -----------------------------------------------------------


def _cos_sin(tp: TorusPoint) -> tuple[mpfr, mpfr, float]:
    """cos(pi theta), sin(pi theta) and the error radius of the cosine."""
    c = hp.cospi(tp.value)
    s = hp.sinpi(tp.value)
    radius = math.pi * (tp.error_bound + hp.ulp_of(tp.value))
    return c, s, radius


def step_A(params: ModelParams, k: int = 0) -> np.ndarray:
    """One-step matrix [[E - lam*tan(pi theta_k), -1], [1, 0]] at site k."""
    c, s, radius = _cos_sin(params.site(k))
    if abs(c) <= radius:
        raise SingularSite(
            f"site {k}: |cos(pi theta_k)| below the error radius {radius:.3e}")
    t = float(s / c)
    return np.array([[params.E - params.lam * t, -1.0], [1.0, 0.0]])


def step_F(params: ModelParams, k: int = 0) -> np.ndarray:
    """Regularized step cos(pi theta_k) * A at site k; entries are bounded."""
    c, s, _ = _cos_sin(params.site(k))
    cf_, sf = float(c), float(s)
    return np.array([[params.E * cf_ - params.lam * sf, -cf_], [cf_, 0.0]])


# -- ordered products -------------------------------------------------------

MAX_PRODUCT_LEN = 10**7


def _dd(x: mpfr) -> tuple[float, float]:
    """Split an mpfr into a double-double (hi, lo) pair."""
    hi = float(x)
    with hp.ctx(max(x.precision, 64) + 8):
        lo = float(x - hi)
    return hi, lo


def _kernel_product(theta: TorusPoint, alpha: Frequency, E: float, lam: float,
                    k: int):
    t_hi, t_lo = _dd(theta.value)
    a_hi, a_lo = _dd(alpha.value)
    return backends.f_product(t_hi, t_lo, a_hi, a_lo, E, lam, k)


def product_F(params: ModelParams, k: int) -> ScaledMatrix:
    """Ordered product F(theta+(k-1)a) ... F(theta) as a ScaledMatrix.

    k = 0 gives the identity; negative k is the inverse of the forward
    product started at theta + k*alpha, computed from its adjugate and the
    cosine log-sum (the determinant of an F-product is the squared cosine
    product, far too small to read off the stored entries).
    """
    if abs(k) > MAX_PRODUCT_LEN:
        raise ValueError(f"|k| = {abs(k)} exceeds {MAX_PRODUCT_LEN}")
    if k == 0:
        return ScaledMatrix.identity()
    if k > 0:
        mat, log_scale, _, _ = _kernel_product(params.theta, params.alpha,
                                               params.E, params.lam, k)
        return ScaledMatrix.wrap(mat, log_scale)
    base = params.site(k)
    mat, log_scale, cos_log, _ = _kernel_product(base, params.alpha,
                                                 params.E, params.lam, -k)
    if math.isinf(cos_log):
        raise SingularSite(
            "a cosine vanishes in the window; the product is not invertible")
    fwd = ScaledMatrix.wrap(mat, log_scale)
    adj = fwd.adjugate()
    # inv(value) = adj(value) / det(value), det(value) = exp(2 * cos_log) > 0
    return ScaledMatrix(adj.m, adj.log_scale - 2.0 * cos_log)


def product_A(params: ModelParams, k: int) -> ScaledMatrix:
    """Ordered product of the singular steps A, derived from the F-product
    by dividing out the signed cosine product."""
    if abs(k) > MAX_PRODUCT_LEN:
        raise ValueError(f"|k| = {abs(k)} exceeds {MAX_PRODUCT_LEN}")
    if k == 0:
        return ScaledMatrix.identity()
    if k > 0:
        mat, log_scale, cos_log, parity = _kernel_product(
            params.theta, params.alpha, params.E, params.lam, k)
        if math.isinf(cos_log):
            raise SingularSite(
                "a cosine vanishes in the window; the A-product is undefined")
        if parity:
            mat = -mat
        return ScaledMatrix.wrap(mat, log_scale - cos_log)
    # det(A-product) = 1, so the inverse is exactly the adjugate
    fwd = product_A(params.shifted(k), -k)
    return fwd.adjugate()


# -- determinants -----------------------------------------------------------


def _site_stream(theta: TorusPoint, alpha: Frequency,
                 k: int) -> Iterator[tuple[int, mpfr, float]]:
    """Yield (j, theta_j as mpfr, error radius) for j = 0..k-1.

    Phases are accumulated by repeated addition of alpha at a handful of
    guard bits, so the radius stays at j ulps plus the propagated input
    radii -- negligible against double rounding for any realistic k.  All
    arithmetic goes through an explicit context object; the caller's
    thread context is never touched across a yield.
    """
    bits = max(theta.precision_bits, alpha.precision_bits)
    c = gmpy2.context(precision=bits + 8)
    step_err = alpha.value_error + 2.0 ** (4 - bits)
    ph = c.add(theta.value, mpfr(0))
    for j in range(k):
        yield j, ph, theta.error_bound + j * step_err
        ph = c.add(ph, alpha.value)
        if ph >= 1:
            ph = c.sub(ph, mpfr(1))


def det_pair(params: ModelParams, k: int) -> DetPair:
    """(P_k, P_{k-1}) where P_j = det((E - H)|[0, j-1]).

    Runs the three-term recurrence
    P_j = (E - lam*tan(pi theta_{j-1})) P_{j-1} - P_{j-2} with both terms
    divided by the larger magnitude at every step; the shed factors are
    accumulated at working precision, so the returned logs carry no rounding
    pile-up.  Raises SingularSite at a tangent pole.
    """
    if k < 0:
        raise ValueError("determinant order k must be nonnegative")
    bits = max(params.theta.precision_bits, params.alpha.precision_bits)
    with hp.ctx(bits):
        lam = hp.to_mpfr(params.lam, bits)
        E = hp.to_mpfr(params.E, bits)
        prev, cur = mpfr(0), mpfr(1)
        acc = mpfr(0)
        for j, ph, err in _site_stream(params.theta, params.alpha, k):
            c = hp.cospi(ph)
            if abs(c) <= math.pi * err:
                raise SingularSite(
                    f"site {j}: |cos(pi theta_j)| below the error radius")
            t = hp.sinpi(ph) / c
            cur, prev = (E - lam * t) * cur - prev, cur
            top = max(abs(cur), abs(prev))
            if top > 0:
                cur /= top
                prev /= top
                acc += gmpy2.log(top)
        return DetPair(k, _signed_log_of(cur, acc), _signed_log_of(prev, acc))


def _signed_log_of(x: mpfr, acc: mpfr) -> SignedLog:
    if x == 0:
        return SignedLog(0, float("-inf"))
    return SignedLog(1 if x > 0 else -1, float(acc + gmpy2.log(abs(x))))


def det_P(params: ModelParams, k: int) -> SignedLog:
    """det((E - H)|[0, k-1]) in signed-log form."""
    return det_pair(params, k).cur


def det_Ptilde(params: ModelParams, k: int) -> SignedLog:
    """The cosine-regularized determinant: prod cos(pi theta_j) * P_k.

    Computed by its own bounded recurrence (the upper-left entry of the
    F-product), not by rescaling det_P, so the defining identity between the
    two is a genuine cross-check.
    """
    if k < 0:
        raise ValueError("determinant order k must be nonnegative")
    bits = max(params.theta.precision_bits, params.alpha.precision_bits)
    with hp.ctx(bits):
        lam = hp.to_mpfr(params.lam, bits)
        E = hp.to_mpfr(params.E, bits)
        prev, cur = mpfr(0), mpfr(1)
        c_last = mpfr(1)
        acc = mpfr(0)
        for _, ph, _ in _site_stream(params.theta, params.alpha, k):
            c = hp.cospi(ph)
            s = hp.sinpi(ph)
            cur, prev = (E * c - lam * s) * cur - c * c_last * prev, cur
            c_last = c
            top = max(abs(cur), abs(prev))
            if top > 0:
                cur /= top
                prev /= top
                acc += gmpy2.log(top)
        return _signed_log_of(cur, acc)


def cosine_log_sum(params: ModelParams, k: int) -> SignedLog:
    """prod_{j<k} cos(pi theta_j) as a signed log, at phase precision."""
    if k < 0:
        raise ValueError("window length k must be nonnegative")
    bits = max(params.theta.precision_bits, params.alpha.precision_bits)
    sign = 1
    with hp.ctx(bits):
        acc = mpfr(0)
        for _, ph, _ in _site_stream(params.theta, params.alpha, k):
            c = hp.cospi(ph)
            if c == 0:
                return SignedLog(0, float("-inf"))
            if c < 0:
                sign = -sign
            acc += gmpy2.log(abs(c))
        return SignedLog(sign, float(acc))


# -- Lyapunov exponents -----------------------------------------------------


def lyapunov_closed(lam: float, E: float) -> float:
    """The exponent L(lam, E), from the closed-form mean of the two edge
    square roots: e^L + e^{-L} = (sqrt((2+E)^2+lam^2) + sqrt((2-E)^2+lam^2))/2.
    """
    if lam < 0:
        raise ValueError("coupling lam must be nonnegative")
    R = (math.hypot(2.0 + E, lam) + math.hypot(2.0 - E, lam)) / 2.0
    return math.acosh(max(R / 2.0, 1.0))


def lyapunov_tilde(lam: float, E: float) -> float:
    """The exponent of the regularized cocycle: L - ln 2."""
    return lyapunov_closed(lam, E) - LN2


class LyapunovEstimate(NamedTuple):
    value: float
    stderr: float
    samples: tuple


_BOOTSTRAP_SEED = 20160
_BOOTSTRAP_ROUNDS = 1000


def lyapunov_empirical(params: ModelParams, k: int,
                       n_samples: int = 32) -> LyapunovEstimate:
    """Finite-k exponent (1/k) ln ||A_k|| averaged over equidistributed
    phases, with a bootstrap standard error.

    Each sample runs the F-product at phase theta + i/n_samples and adds
    ln 2 back (the cosine factor costs exactly ln 2 per step on average).
    """
    if k < 10**3:
        raise ValueError("k below the asymptotic regime (need k >= 1000)")
    if n_samples < 1:
        raise ValueError("need at least one sample")
    bits = params.theta.precision_bits
    samples = np.empty(n_samples)
    for i in range(n_samples):
        with hp.ctx(bits + 8):
            t = params.theta.value + mpfr(i) / n_samples
            if t >= 1:
                t -= 1
        tp = TorusPoint(hp.to_mpfr(t, bits), params.theta.error_bound)
        mat, log_scale, _, _ = _kernel_product(tp, params.alpha,
                                               params.E, params.lam, k)
        norm = float(np.linalg.norm(mat, 2))
        samples[i] = (log_scale + math.log(norm)) / k + LN2
    value = float(samples.mean())
    if n_samples == 1:
        return LyapunovEstimate(value, 0.0, tuple(samples))
    rng = np.random.default_rng(_BOOTSTRAP_SEED)
    idx = rng.integers(0, n_samples, size=(_BOOTSTRAP_ROUNDS, n_samples))
    stderr = float(samples[idx].mean(axis=1).std(ddof=1))
    return LyapunovEstimate(value, stderr, tuple(samples))


# -- cosine log-sum deviation over one denominator window --------------------


def lana_check(f: Frequency, theta, n: int) -> tuple[float, int]:
    """Deviation of the log-cosine sum over one window of length q_n.

    Over j = 0..q_n-1 the phases theta + j*alpha fill the circle almost
    uniformly, so the sum of ln|cos(pi theta_j)| with the single closest
    approach to the pole removed should sit near -(q_n - 1) ln 2.  Returns
    (S, j0) where S is the sum minus that baseline and j0 the removed site.
    """
    theta = TorusPoint.make(theta, f.precision_bits)
    q = f.q(n)
    bits = max(theta.precision_bits, f.precision_bits)
    j0 = 0
    with hp.ctx(bits):
        total = mpfr(0)
        best = None
        for j, ph, _ in _site_stream(theta, f, q):
            c = abs(hp.cospi(ph))
            lc = gmpy2.log(c)
            total += lc
            if best is None or c < best:
                best = c
                j0 = j
                best_log = lc
        S = total - best_log + (q - 1) * gmpy2.log(mpfr(2))
    return float(S), j0
