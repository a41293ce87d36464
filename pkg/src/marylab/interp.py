"""Lagrange structure of the regularized determinants and node-set
diagnostics.

P_tilde_k(theta)/cos^k(pi theta) is a degree-k polynomial in tan(pi theta),
so P_tilde_k is determined by its values on any k+1 phases, with the cardinal
functions prod sin(pi(theta - theta_l)) / sin(pi(theta_j - theta_l)).  The
quality of such a reconstruction is governed by the gamma-uniformity of the
node phases: the sup over theta of the largest cardinal function, measured
here on a grid with local refinement.  Two node families matter: unions of
two denominator-length windows around resonant sites, and shorter unions at
a coarser scale for non-resonant sites.  The module also provides the
phase-averaged growth of ln|P_tilde_k|, whose mean is bounded below by the
regularized exponent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import gmpy2
import numpy as np
from gmpy2 import mpfr

from . import backends, cocycle, hp
from .cf import Frequency, TorusPoint
from .cocycle import ModelParams
from .errors import (DegenerateNodes, IllConditioned, RangeViolation,
                     ResonantY)

KIND_RESONANT = "resonant_I0_Il"
KIND_NONRESONANT = "nonresonant_tilde"
KIND_CUSTOM = "custom"

DEFAULT_EPS = 0.05


@dataclass(frozen=True)
class NodeSet:
    """Interpolation sites j with their phases theta + j*alpha.

    kind records which construction produced the set; scale_params carries
    (n, ell) for the resonant windows and (n, n0, s, y) for the non-resonant
    ones.  Cardinality is pinned by the construction: 2*q_n sites for the
    resonant union, 2*s*q_{n-n0} for the non-resonant one.
    """

    indices: tuple
    thetas: tuple
    kind: str = KIND_CUSTOM
    scale_params: tuple = field(default=())

    def __post_init__(self):
        if len(self.indices) != len(set(self.indices)):
            raise ValueError("node indices must be distinct")
        if len(self.indices) != len(self.thetas):
            raise ValueError("indices and thetas must pair up")
        if len(self.indices) < 2:
            raise ValueError("need at least two nodes")

    def __len__(self):
        return len(self.indices)

    @property
    def degree(self) -> int:
        """Degree of the polynomial the set determines (= cardinality - 1)."""
        return len(self.indices) - 1

    @classmethod
    def from_indices(cls, f: Frequency, theta: TorusPoint, indices,
                     kind: str = KIND_CUSTOM, scale_params=()) -> "NodeSet":
        theta = TorusPoint.make(theta, f.precision_bits)
        idx = tuple(int(j) for j in indices)
        return cls(idx, tuple(f.shift(theta, j) for j in idx),
                   kind, tuple(scale_params))


def build_resonant_nodes(f: Frequency, theta, n: int, ell: int) -> NodeSet:
    """The 2*q_n sites of two denominator windows separated by ell periods.

    The base window is [-floor(q_n/2), q_n - floor(q_n/2) - 1] and its
    partner sits ell*q_n sites away; ell must satisfy
    0 < |ell| <= 2 q_{n+1} / (3 q_n).
    """
    q = f.q(n)
    q_next = f.q(n + 1)
    if ell == 0 or 3 * abs(ell) * q > 2 * q_next:
        raise RangeViolation(
            f"ell = {ell} outside 0 < |ell| <= 2q_{{n+1}}/(3q_n) = "
            f"{2 * q_next / (3 * q):.3f}")
    base = range(-(q // 2), q - q // 2)
    idx = sorted(list(base) + [j + ell * q for j in base])
    return NodeSet.from_indices(f, theta, idx, KIND_RESONANT, (n, ell))


def default_bn(f: Frequency, n: int, eps: float = DEFAULT_EPS,
               lyap: float = 1.0) -> int:
    """Resonance half-width floor(eps*q_n/max(L,1)), at least 1."""
    return max(1, int(eps * f.q(n) / max(lyap, 1.0)))


def build_nonresonant_nodes(f: Frequency, theta, n: int, y: int,
                            b_n: int | None = None) -> NodeSet:
    """Two windows of s*q_{n-n0} consecutive sites, one ending just left of
    the origin region and its copy shifted to y.

    n0 is the least positive integer with 2 q_{n-n0} <= dist(y, q_n Z) and s
    the greatest with 2 s q_{n-n0} <= dist(y, q_n Z); together they squeeze
    the window length against the distance:
    b_n < dist < 2 q_{n-n0+1} and s q_{n-n0} < q_{n-n0+1}.
    """
    q = f.q(n)
    if b_n is None:
        b_n = default_bn(f, n)
    dist = min(y % q, (-y) % q)
    if dist <= b_n:
        raise ResonantY(f"dist(y, q_n Z) = {dist} <= b_n = {b_n}")
    n0 = None
    for cand in range(1, n + 1):
        if 2 * f.q(n - cand) <= dist:
            n0 = cand
            break
    if n0 is None:
        raise ResonantY(f"no window scale fits below dist = {dist}")
    qm = f.q(n - n0)
    s = dist // (2 * qm)
    size = s * qm
    base = range(-(size // 2) - size, -(size // 2))
    idx = list(base) + [j + y for j in base]
    if len(set(idx)) != 2 * size:
        raise ResonantY(f"windows at 0 and y = {y} overlap")
    return NodeSet.from_indices(f, theta, sorted(idx), KIND_NONRESONANT,
                                (n, n0, s, y))


# ------------------------------------------------------------ interpolation


def _node_floats(nodes: NodeSet) -> np.ndarray:
    return np.array([float(tp.value) for tp in nodes.thetas])


def _check_degenerate(nodes: NodeSet):
    for a in range(len(nodes)):
        ta = nodes.thetas[a]
        for b in range(a + 1, len(nodes)):
            tb = nodes.thetas[b]
            with hp.ctx(max(ta.precision_bits, tb.precision_bits) + 8):
                gap = hp.dist_to_int(ta.value - tb.value)
            if gap <= ta.error_bound + tb.error_bound:
                raise DegenerateNodes(
                    f"nodes {nodes.indices[a]} and {nodes.indices[b]} "
                    "coincide mod 1 within the error radius")


def lagrange_sum(nodes: NodeSet, values, theta_eval) -> mpfr:
    """sum_j values[j] * prod_{l != j} sin pi(theta - theta_l) /
    sin pi(theta_j - theta_l), at the node precision."""
    if len(values) != len(nodes):
        raise ValueError("need one value per node")
    _check_degenerate(nodes)
    bits = max(tp.precision_bits for tp in nodes.thetas)
    theta_eval = TorusPoint.make(theta_eval, bits)
    # Differences of the [0,1) representatives are used as they are: sin(pi x)
    # has period 2, so reducing them mod 1 would flip signs pair by pair and
    # break the identity.  With fixed representatives it is lift-independent.
    with hp.ctx(bits):
        num_logs = []
        num_signs = []
        for tp in nodes.thetas:
            s = hp.sinpi(theta_eval.value - tp.value)
            num_signs.append(-1 if s < 0 else (0 if s == 0 else 1))
            num_logs.append(gmpy2.log(abs(s)) if s != 0 else mpfr("-inf"))
        total = mpfr(0)
        for j, tj in enumerate(nodes.thetas):
            den_log = mpfr(0)
            den_sign = 1
            for l, tl in enumerate(nodes.thetas):
                if l == j:
                    continue
                s = hp.sinpi(tj.value - tl.value)
                den_log += gmpy2.log(abs(s))
                if s < 0:
                    den_sign = -den_sign
            if any(l != j and num_signs[l] == 0 for l in range(len(nodes))):
                continue  # theta_eval sits on another node: cardinal is 0
            num_log = sum((num_logs[l] for l in range(len(nodes)) if l != j),
                          mpfr(0))
            num_sign = 1
            for l in range(len(nodes)):
                if l != j and num_signs[l] < 0:
                    num_sign = -num_sign
            total += mpfr(values[j]) * num_sign * den_sign * gmpy2.exp(
                num_log - den_log)
        return total


def lagrange_reconstruct(params: ModelParams, k: int, nodes: NodeSet,
                         theta_eval) -> mpfr:
    """P_tilde_k at theta_eval rebuilt from its values on the k+1 nodes."""
    if len(nodes) != k + 1:
        raise ValueError(f"need k+1 = {k + 1} nodes, got {len(nodes)}")
    values = [ptilde_value(params, tp, k) for tp in nodes.thetas]
    return lagrange_sum(nodes, values, theta_eval)


def ptilde_value(params: ModelParams, theta: TorusPoint, k: int) -> mpfr:
    """P_tilde_k at the given phase as a full-precision mpfr.

    Sites are taken at the real numbers theta + j*alpha (theta the [0, 1)
    representative), so the result is the analytic trig polynomial that the
    interpolation identities apply to.  Its magnitude agrees with the
    signed-log determinant; the sign differs from the torus-reduced one by
    the parity of the sites that wrapped past an integer, since every
    monomial of P_tilde_k carries exactly one cosine or sine per site.
    """
    bits = max(theta.precision_bits, params.alpha.precision_bits)
    ph_frac = _dyadic(theta.value)
    step = _dyadic(params.alpha.value)
    wraps = 0
    with hp.ctx(bits):
        lam = hp.to_mpfr(params.lam, bits)
        E = hp.to_mpfr(params.E, bits)
        prev, cur = mpfr(0), mpfr(1)
        c_last = mpfr(1)
        acc = mpfr(0)
        for _ in range(k):
            m = math.floor(ph_frac)
            wraps += m
            ph = hp.to_mpfr(ph_frac - m, bits)
            c = hp.cospi(ph)
            s = hp.sinpi(ph)
            cur, prev = (E * c - lam * s) * cur - c * c_last * prev, cur
            c_last = c
            top = max(abs(cur), abs(prev))
            if top > 0:
                cur /= top
                prev /= top
                acc += gmpy2.log(top)
            ph_frac += step
        val = cur * gmpy2.exp(acc)
        return -val if wraps % 2 else val


# ---------------------------------------------------- polynomial structure


def g_poly_check(params: ModelParams, k: int, n_test_points: int = 24) -> float:
    """Largest relative residual of the degree-k polynomial identity for
    P_tilde_k(theta)/cos^k(pi theta) in tan(pi theta).

    Fits through k+1 equispaced phases (projectively spread tangents),
    evaluates at interior test phases, and compares against the directly
    computed left side.  Raises IllConditioned when the scaled-Vandermonde
    condition estimate eats the precision budget.
    """
    if not 1 <= k <= 40:
        raise ValueError("k must be in 1..40 (conditioning)")
    if n_test_points < 1:
        raise ValueError("need at least one test point")
    bits = max(params.theta.precision_bits, params.alpha.precision_bits)
    with hp.ctx(bits):
        # nodes theta_j strictly inside (-1/2, 1/2), symmetric
        node_phases = [mpfr(2 * j + 1) / (2 * (k + 1)) - mpfr(1) / 2
                       for j in range(k + 1)]
        tangents = [hp.tanpi(ph) for ph in node_phases]
        t_top = max(abs(t) for t in tangents)
        scaled = [t / t_top for t in tangents]
        cond = float(np.linalg.cond(
            np.vander([float(u) for u in scaled], increasing=True)))
        if math.log2(max(cond, 1.0)) > bits - 48:
            raise IllConditioned(
                f"Vandermonde condition 2^{math.log2(cond):.1f} exceeds the "
                f"budget at {bits} bits")
        values = [_g_value(params, ph, k, bits) for ph in node_phases]
        # Newton divided differences on the scaled tangents
        table = list(values)
        for order in range(1, k + 1):
            for row in range(k, order - 1, -1):
                table[row] = ((table[row] - table[row - 1])
                              / (scaled[row] - scaled[row - order]))
        lo, hi = node_phases[0], node_phases[-1]
        worst = 0.0
        for m in range(n_test_points):
            ph = lo + (hi - lo) * mpfr(2 * m + 1) / (2 * n_test_points)
            u = hp.tanpi(ph) / t_top
            acc = table[k]
            for row in range(k - 1, -1, -1):
                acc = acc * (u - scaled[row]) + table[row]
            ref = _g_value(params, ph, k, bits)
            denom = max(abs(ref), abs(acc), mpfr(1) / mpfr(10) ** 30)
            worst = max(worst, float(abs(acc - ref) / denom))
        return worst


def _dyadic(x: mpfr) -> Fraction:
    """The exact rational content of an mpfr."""
    n, d = x.as_integer_ratio()
    return Fraction(int(n), int(d))


def _g_value(params: ModelParams, phase: mpfr, k: int, bits: int) -> mpfr:
    """P_tilde_k(phase)/cos^k(pi phase) computed directly."""
    tp = TorusPoint(hp.frac1(hp.to_mpfr(phase, bits)), 0.0)
    val = ptilde_value(params, tp, k)
    return val / hp.cospi(tp.value) ** k


# ------------------------------------------------------------- uniformity


def uniformity_gamma(nodes: NodeSet, grid_size: int | None = None,
                     refine_iters: int = 60) -> float:
    """(1/k) ln of the largest cardinal-function value over the circle.

    The sup over theta is bounded below on an equispaced grid (offset to
    avoid exact node hits) and then polished by golden-section ascent around
    the grid argmax; the polished value is still a lower bound of the true
    sup, which is all the uniformity diagnostics need.
    """
    count = len(nodes)
    if grid_size is None:
        grid_size = 10 * count
    if grid_size < 10 * count:
        raise ValueError("grid_size must be at least 10x the node count")
    th = _node_floats(nodes)
    k = count - 1
    den_logs = np.empty(count)
    with np.errstate(divide="ignore"):
        for j in range(count):
            d = th[j] - th
            den_logs[j] = float(
                np.log(np.abs(backends.sinpi(np.delete(d, j)))).sum())

        def cardinal_max(grid: np.ndarray) -> np.ndarray:
            diff = grid[:, None] - th[None, :]
            logs = np.log(np.abs(backends.sinpi(diff)))
            s = logs.sum(axis=1)
            vals = s[:, None] - logs - den_logs[None, :]
            # a grid point landing exactly on a node gives inf - inf
            return np.nan_to_num(vals, nan=-np.inf).max(axis=1)

        grid = (np.arange(grid_size) + 0.382) / grid_size
        vals = cardinal_max(grid)
        best = int(np.argmax(vals))
        lo = grid[best] - 1.0 / grid_size
        hi = grid[best] + 1.0 / grid_size
        peak = float(vals[best])
        inv = (math.sqrt(5) - 1) / 2
        a, b = lo, hi
        c1 = b - inv * (b - a)
        c2 = a + inv * (b - a)
        f1 = float(cardinal_max(np.array([c1]))[0])
        f2 = float(cardinal_max(np.array([c2]))[0])
        for _ in range(refine_iters):
            if f1 < f2:
                a, c1, f1 = c1, c2, f2
                c2 = a + inv * (b - a)
                f2 = float(cardinal_max(np.array([c2]))[0])
            else:
                b, c2, f2 = c2, c1, f1
                c1 = b - inv * (b - a)
                f1 = float(cardinal_max(np.array([c1]))[0])
        peak = max(peak, f1, f2)
    return peak / k


def resonant_gamma_bound(f: Frequency, n: int, ell: int,
                         eps: float = DEFAULT_EPS) -> float:
    """ln(q_{n+1}/|ell|)/(2 q_n - 1) + eps, the uniformity ceiling for the
    two-window resonant node family."""
    return math.log(f.q(n + 1) / abs(ell)) / (2 * f.q(n) - 1) + eps


# ------------------------------------------------------- averaged growth


def herman_average(params: ModelParams, k: int, quad_points: int = 10**4
                   ) -> float:
    """(1/k) x phase average of ln|P_tilde_k| over an equidistributed grid.

    Midpoint quadrature handles the integrable log zeros; the 0.382 offset
    keeps grid points away from the lattice where the integrand's zeros
    concentrate.  The mean is bounded below by the regularized exponent.
    """
    if quad_points < 10**3:
        raise ValueError("need at least 1000 quadrature points")
    if k < 1:
        raise ValueError("k must be positive")
    a_hi, a_lo = cocycle._dd(params.alpha.value)
    grid = (np.arange(quad_points) + 0.382) / quad_points
    _, logs = backends.ptilde_logs(grid, a_hi, a_lo, params.E, params.lam, k)
    bad = ~np.isfinite(logs)
    if bad.any():  # a grid point fell on a zero: nudge those points only
        _, redo = backends.ptilde_logs(grid[bad] + 0.5 / quad_points**2,
                                       a_hi, a_lo, params.E, params.lam, k)
        logs[bad] = redo
    return math.fsum(logs) / (quad_points * k)
