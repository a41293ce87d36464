"""Resonance indices and the anti-resonance site construction.

For a frequency alpha and phase theta, the scale-n index

    delta_n = (ln ||q_n (theta - 1/2)|| - ln ||q_n alpha||) / q_n

measures how close theta - 1/2 comes to the orbit of alpha at scale q_n.
This module computes delta_n, its running estimate, the explicitly
constructed anti-resonance site (m_n, ell_n) together with a full clause
checker, and the table of cosine minima c_{n,ell} governing transfer-matrix
denominators.  e^{delta_n q_n} is handled in log space throughout since it
overflows any float for strongly resonant frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr

from . import hp
from .cf import Frequency, TorusPoint
from .errors import (ConstructionFailed, IndexOutOfRange, SingularPhase,
                     SmallScale, WrongBranch)

__all__ = [
    "ResonanceProfile",
    "delta_n",
    "delta_numerator",
    "delta_estimate",
    "theta_minimal",
    "verify_minimal",
    "c_table",
    "delta_alternate",
    "tilde_m_candidates",
    "resonance_profile",
]

SMALL_SCALE = 20  # below this q_n the construction is not attempted


def _map_window(k: int, q: int) -> int:
    """Reduce k mod q into [-q/2, q/2)."""
    r = k % q
    return r - q if 2 * r >= q else r


def _theta_half(theta: TorusPoint) -> tuple[mpfr, float]:
    """theta - 1/2 reduced to [0,1), with error radius."""
    bits = theta.value.precision
    with hp.ctx(bits + 8):
        v = theta.value - mpfr(1) / 2
        if v < 0:
            v += 1
    return v, theta.error_bound + hp.ulp_of(v)


def _work_bits(f: Frequency, theta: TorusPoint, n: int) -> int:
    qn1 = f.q(min(n + 1, f.depth))
    return max(f.precision_bits, theta.precision_bits) + qn1.bit_length() + 32


class _Scale:
    """Cached per-(f, theta, n) quantities used by the construction."""

    def __init__(self, f: Frequency, theta: TorusPoint, n: int):
        if n + 1 > f.depth:
            raise IndexOutOfRange(f"scale {n} needs q_{n + 1} (depth {f.depth})")
        self.f = f
        self.theta = theta
        self.n = n
        self.qn = f.q(n)
        self.qn1 = f.q(n + 1)
        self.pn = f.p(n)
        self.an1 = f.a(n + 1)
        self.bits = _work_bits(f, theta, n)
        self.psi, self.psi_err = _theta_half(theta)
        # signed convergent offset q_n*alpha - p_n, exact
        self.d_exact = self.qn * f.exact - self.pn
        with hp.ctx(self.bits):
            self.d = hp.to_mpfr(self.d_exact, self.bits)
            self.d_abs = abs(self.d)
        # q_n (theta - 1/2) mod 1 and its distance to Z
        frac, err = hp.mul_mod1(self.qn, self.psi, self.psi_err)
        self.x_frac, self.x_err = frac, err
        with hp.ctx(self.bits):
            self.x_dist = min(frac, 1 - frac)
            self.x_signed = frac if frac <= mpfr(1) / 2 else frac - 1
        if self.x_dist <= self.x_err:
            raise SingularPhase(
                f"||q_{n}(theta-1/2)|| indistinguishable from 0 at this precision"
            )

    def numerator(self) -> mpfr:
        """delta_n * q_n = ln ||q_n(theta-1/2)|| - ln ||q_n alpha||."""
        with hp.ctx(self.bits):
            return gmpy2.log(self.x_dist) - gmpy2.log(self.d_abs)

    def site_phase(self, site: int) -> tuple[mpfr, float]:
        """theta - 1/2 + site*alpha mod 1 in [0,1) with error radius.

        site*alpha is reduced by exact integer arithmetic on the rational
        representative, so the radius stays at the phase's own error even for
        astronomically large sites.
        """
        if site == 0:
            return self.psi, self.psi_err
        num = self.f.exact.numerator
        den = self.f.exact.denominator
        r = (site * num) % den
        with hp.ctx(self.bits):
            ka = hp.to_mpfr(Fraction(r, den), self.bits)
            v = self.psi + ka
            if v >= 1:
                v -= 1
        return v, self.psi_err + 2.0 ** max(2 - self.bits, -1000)

    def site_dist(self, site: int) -> tuple[mpfr, float]:
        """||theta - 1/2 + site*alpha|| with error radius."""
        v, err = self.site_phase(site)
        with hp.ctx(self.bits):
            return min(v, 1 - v), err

    def window_min(self, center: int, half: bool) -> tuple[mpfr, int]:
        """min ||theta-1/2+(center+k)alpha|| over |k|<q_n (or k in [-q_n/2,q_n/2)).

        Only residue classes k p_n = -p' + c (mod q_n) with |c| <= 2 can attain
        the minimum, where p' is the nearest lattice point; everything else
        stays at distance >= 2.4/q_n while the c = 0 class reaches below
        0.6/q_n.  This keeps the search O(1) instead of O(q_n).
        """
        q, pn = self.qn, self.pn
        if q < 8:
            ks = range(-(q // 2), (q + 1) // 2) if half else range(-q + 1, q)
            best = None
            for k in ks:
                dist, _ = self.site_dist(center + k)
                if best is None or dist < best[0]:
                    best = (dist, k)
            return best
        xf, _ = self.site_phase(center)
        with hp.ctx(self.bits):
            pprime = int(gmpy2.rint(q * xf))
        inv = pow(pn % q, -1, q)
        cand: set[int] = set()
        for c in (-2, -1, 0, 1, 2):
            k0 = ((c - pprime) * inv) % q
            if half:
                cand.add(_map_window(k0, q))
            else:
                cand.add(k0)
                if k0 > 0:
                    cand.add(k0 - q)
        best = None
        for k in sorted(cand):
            dist, _ = self.site_dist(center + k)
            if best is None or dist < best[0]:
                best = (dist, k)
        return best


def delta_numerator(f: Frequency, theta: TorusPoint, n: int) -> mpfr:
    """delta_n * q_n, kept as a high-precision scalar (safe to exponentiate)."""
    return _Scale(f, theta, n).numerator()


def delta_n(f: Frequency, theta: TorusPoint, n: int) -> float:
    return float(delta_numerator(f, theta, n) / f.q(n))


def delta_estimate(f: Frequency, theta: TorusPoint, depth: int | None = None,
                   n_min: int = 1) -> float:
    """max over n_min <= n <= depth of max(0, delta_n): running lower proxy."""
    top = f.depth - 1 if depth is None else min(depth, f.depth - 1)
    if top < n_min:
        raise IndexOutOfRange("no stored scales in the requested range")
    return max(max(0.0, delta_n(f, theta, n)) for n in range(n_min, top + 1))


def _choose_j0(sc: _Scale) -> int:
    """Integer shift bringing q_n(theta-1/2) within ||q_n alpha||/2 of Z."""
    if sc.x_err >= float(sc.d_abs) / 8:
        raise ConstructionFailed(
            f"phase error radius {sc.x_err:.3g} too large for scale {sc.n} "
            f"(||q_n alpha|| ~ {float(sc.d_abs):.3g}); raise the precision"
        )
    with hp.ctx(sc.bits):
        t = -sc.x_signed / sc.d
        fl = gmpy2.floor(t)
        frac_t = t - fl
    lo = int(fl)
    cands = [lo, lo + 1]
    if frac_t > 0.5:
        cands.reverse()  # nearest first
    elif frac_t == 0.5:
        cands.sort(key=lambda j: (abs(j), j))  # tie: smaller |j0|, then negative
    half = sc.d_abs / 2
    for j in cands:
        with hp.ctx(sc.bits):
            resid = hp.dist_to_int(sc.x_signed + j * sc.d)
        if resid <= half * (1 + 1e-20):
            return j
    raise ConstructionFailed(
        f"no j0 satisfies the half-width bound at scale {sc.n}"
    )


def _stage_one(sc: _Scale) -> tuple[int, int, int, int]:
    """(j0, j1, m, ell): the raw construction before the small-a_{n+1} fixup."""
    j0 = _choose_j0(sc)
    # p = nearest integer to q_n * (theta - 1/2 + j0 alpha)
    psi_j, _ = sc.site_phase(j0)
    with hp.ctx(sc.bits):
        s = hp.signed_frac(psi_j)
        p = int(gmpy2.rint(sc.qn * s))
    q, pn = sc.qn, sc.pn
    inv = pow(pn % q, -1, q) if q > 1 else 0
    j1 = _map_window((-p * inv) % q, q) if q > 1 else 0
    k_n = j0 + j1
    m = _map_window(k_n, q)
    ell = (k_n - m) // q
    return j0, j1, m, ell


def _candidate_set(sc: _Scale, m: int, ell: int) -> set[int]:
    """The finite location set for the true cosine minimizer, a_{n+1} <= 3."""
    a1 = sc.an1
    if a1 >= 4:
        raise WrongBranch("candidate table applies only when a_{n+1} <= 3")
    if ell == 0:
        return set()
    b = 1 if ell > 0 else -1
    qn, qn_1 = sc.qn, sc.f.q(sc.n - 1)
    out: set[int] = set()
    if a1 in (2, 3):
        if abs(ell) <= a1 - 1:
            out = set()
        elif abs(ell) == a1:
            out = {m - b * qn_1}
    else:  # a1 == 1
        if abs(ell) == 1:
            out = {m - b * qn_1}
        elif abs(ell) == 2:
            # a_{n+2} decides which shift applies; keep both (a superset is
            # harmless) when the expansion does not reach that far
            a2 = sc.f.a(sc.n + 2) if sc.n + 2 <= sc.f.depth else 1
            if a2 >= 2:
                out = {m + b * (qn - qn_1)}
            else:
                out = {m - b * qn_1, m + b * (qn - qn_1)}
    return {c for c in out if -sc.qn <= 2 * c < sc.qn}


def tilde_m_candidates(f: Frequency, theta: TorusPoint, n: int) -> set[int]:
    """Possible locations of the in-window distance minimizer (a_{n+1} <= 3)."""
    sc = _Scale(f, theta, n)
    if sc.an1 >= 4:
        raise WrongBranch("a_{n+1} >= 4 has no relocation step")
    if sc.qn < SMALL_SCALE:
        raise SmallScale(f"q_{n} = {sc.qn} < {SMALL_SCALE}")
    _, _, m, ell = _stage_one(sc)
    return _candidate_set(sc, m, ell)


def theta_minimal(f: Frequency, theta: TorusPoint, n: int) -> tuple[int, int, str]:
    """Anti-resonance site (m_n, ell_n) and which branch produced it.

    Follows the explicit shift-then-reduce construction; when a_{n+1} <= 3
    and the raw site has ell != 0, the candidate set is consulted and the
    site is relocated to the true minimizer if it beats ||q_n alpha||/3.
    """
    sc = _Scale(f, theta, n)
    if sc.qn < SMALL_SCALE:
        raise SmallScale(f"q_{n} = {sc.qn} < {SMALL_SCALE}")
    _, _, m, ell = _stage_one(sc)
    kind = "generic"
    if sc.an1 <= 3 and ell != 0:
        cands = _candidate_set(sc, m, ell)
        if cands:
            scored = [(sc.site_dist(c)[0], c) for c in sorted(cands)]
            dist, c = min(scored)
            if 3 * dist < sc.d_abs:
                m, ell, kind = c, 0, "tilde_case"
    return m, ell, kind


def verify_minimal(f: Frequency, theta: TorusPoint, n: int, m: int, ell: int,
                   j_cap: int = 50) -> tuple[bool, str | None]:
    """Check the four site conditions literally; report the first failure.

    (1) window containment, (2) |ell| against (e^{delta_n q_n}+q_n+1/2)/q_n,
    (3) closeness of theta-1/2+(m+ell*q_n)alpha at the half-width scale,
    (4) the factor-20 minimality over neighbouring sites, in its a_{n+1} >= 4
    (per-j window minima, |j| <= a_{n+1}/6 capped at j_cap) or a_{n+1} <= 3
    (single window minimum) form.
    """
    sc = _Scale(f, theta, n)
    q = sc.qn
    if not -q <= 2 * m < q:
        return False, "1"
    with hp.ctx(sc.bits):
        rhs2 = (gmpy2.exp(sc.numerator()) + q + mpfr(1) / 2) / q
        if mpfr(abs(ell)) > rhs2:
            return False, "2"
        dist3, _ = sc.site_dist(m + ell * q)
        rhs3 = (mpfr(1) / 2 + mpfr(1) / (2 * q)) * sc.d_abs
        if not dist3 < rhs3:
            return False, "3"
    if sc.an1 >= 4:
        J = min(sc.an1 // 6, j_cap)
        for j in range(-J, J + 1):
            lhs, _ = sc.site_dist(m + j * q)
            mn, _ = sc.window_min(m + j * q, half=False)
            if lhs > 20 * mn:
                return False, "4"
    else:
        lhs, _ = sc.site_dist(m)
        mn, _ = sc.window_min(0, half=True)
        if lhs > 20 * mn:
            return False, "4"
    return True, None


def c_table(f: Frequency, theta: TorusPoint, n: int,
            window: int | None = None) -> dict[int, float]:
    """|cos(pi theta_{m_n + ell q_n})| over the admissible ell window."""
    sc = _Scale(f, theta, n)
    m, _, _ = theta_minimal(f, theta, n)
    span = f.q(n + 1) // (6 * f.q(n))
    w = min(50, span) if window is None else min(int(window), span)
    out: dict[int, float] = {}
    for ell in range(-w, w + 1):
        out[ell] = float(_abs_cos_site(sc, m + ell * sc.qn))
    return out


def _abs_cos_site(sc: _Scale, site: int) -> mpfr:
    """|cos(pi (theta + site*alpha))| at working precision.

    Evaluated as |sin(pi (theta - 1/2 + site*alpha))| so the site phase stays
    on the exactly-reduced branch.
    """
    v, _ = sc.site_phase(site)
    with hp.ctx(sc.bits):
        return abs(hp.sinpi(v))


def delta_alternate(f: Frequency, theta: TorusPoint, n: int) -> float:
    """(ln q_{n+1} + ln c_{n,0}) / q_n: the cosine form of delta_n."""
    sc = _Scale(f, theta, n)
    m, _, _ = theta_minimal(f, theta, n)
    c0 = _abs_cos_site(sc, m)
    with hp.ctx(sc.bits):
        val = (gmpy2.log(f.q(n + 1)) + gmpy2.log(c0)) / f.q(n)
    return float(val)


@dataclass
class ResonanceProfile:
    """Everything the deeper layers need about one scale."""

    n: int
    q_n: int
    q_n1: int
    beta_n: float
    delta_n: float
    delta_n_prime: float
    m_n: int
    ell_n: int
    c_table: dict[int, float]
    minimal_kind: str

    def to_json_dict(self) -> dict:
        d = self.__dict__.copy()
        d["c_table"] = {str(k): v for k, v in self.c_table.items()}
        return d

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ResonanceProfile":
        doc = dict(doc)
        doc["c_table"] = {int(k): float(v) for k, v in doc["c_table"].items()}
        return cls(**doc)


def resonance_profile(f: Frequency, theta: TorusPoint, n: int,
                      window: int | None = None) -> ResonanceProfile:
    m, ell, kind = theta_minimal(f, theta, n)
    ok, clause = verify_minimal(f, theta, n, m, ell)
    if not ok:
        raise ConstructionFailed(
            f"constructed site fails its own clause ({clause}) at scale {n}"
        )
    table = c_table(f, theta, n, window)
    if any(not 0 <= v <= 1 for v in table.values()):
        raise ConstructionFailed("cosine table left [0, 1]")
    return ResonanceProfile(
        n=n,
        q_n=f.q(n),
        q_n1=f.q(n + 1),
        beta_n=math.log(f.q(n + 1)) / f.q(n),
        delta_n=delta_n(f, theta, n),
        delta_n_prime=delta_alternate(f, theta, n),
        m_n=m,
        ell_n=ell,
        c_table=table,
        minimal_kind=kind,
    )
