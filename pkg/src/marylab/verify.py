"""Finite-scale decay verification for localized eigenfunctions.

Partitions the lattice into blocks around multiples of q_n, tracks block
maxima of |phi|, and checks the per-scale decay envelope
|phi(k)| <= e^{-(L - delta_n - c*eps)|k|} over the annulus
q_n/12 <= |k| < q_{n+1}/12, together with growth bounds for the regularized
numerators and a block-to-block recursion diagnostic.  The experiment driver
re-centers each computed eigenvector at its own peak and rebuilds the tail
magnitudes by edge-inward three-term recursion, which keeps relative accuracy
where the raw eigenvector entries have only absolute accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import cocycle, indices, spectrum
from .cf import Frequency, TorusPoint
from .cocycle import ModelParams
from .errors import EmptyInterval, NotNormalizable, SingularPhase, SmallScale

ENVELOPE_SLACK = 650.0     # default c in the L - delta_n - c*eps exponent
TIGHT_SLACK = 1.0          # the "sharp rate" variant, reported alongside
RECURSION_SLACK = 40.0     # block recursion slack, non-resonant regime
RECURSION_SLACK_RES = 50.0  # same, resonant regime
DISPATCH_GAP = 200.0       # beta_n >= delta_n + DISPATCH_GAP*eps switches g
WINDOW_DIV = 12            # annulus [q_n/12, q_{n+1}/12) tested per scale
NORM_FLOOR = 1e-8          # below this at both anchor sites: re-center
REGIME_MARGIN = 0.01


# ---------------------------------------------------------------------------
# scale partitions and block maxima


@dataclass
class ScalePartition:
    """Blocks of half-width b_n around the multiples of q_n."""

    n: int
    q_n: int
    q_n1: int
    eps: float
    lyap: float
    tau_n: float
    b_n: int
    m_n: int
    resonant: bool
    blocks: dict[int, tuple[int, int]]
    split_blocks: dict[int, tuple[tuple[int, int], tuple[int, int]]]


def partition(f: Frequency, theta: TorusPoint, n: int, L: float, eps: float,
              ell_max: int | None = None) -> ScalePartition:
    """Block partition at scale n: b_n = tau_n q_n with tau_n the largest
    value in (eps/(2 max(L,1)), eps/max(L,1)] making tau_n q_n an integer.
    """
    q = f.q(n)
    q1 = f.q(n + 1)
    if q < indices.SMALL_SCALE:
        raise ValueError(f"q_{n} = {q} < {indices.SMALL_SCALE}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    denom = max(L, 1.0)
    b = math.floor(q * eps / denom)
    if b < 1 or b / q <= eps / (2.0 * denom):
        raise EmptyInterval(
            f"no integer multiple of 1/{q} lies in "
            f"({eps / (2 * denom):.4g}, {eps / denom:.4g}]"
        )
    m, _ell, _kind = indices.theta_minimal(f, theta, n)
    dist = min(abs(m) % q, q - abs(m) % q)
    resonant = dist <= b
    if ell_max is None:
        ell_max = max(1, q1 // (6 * q))
    blocks = {ell: (ell * q - b, ell * q + b)
              for ell in range(-ell_max, ell_max + 1)}
    split: dict[int, tuple[tuple[int, int], tuple[int, int]]] = {}
    if resonant:
        for ell, (lo, hi) in blocks.items():
            split[ell] = ((lo, ell * q + m - 1), (ell * q + m + 1, hi))
    return ScalePartition(n=n, q_n=q, q_n1=q1, eps=eps, lyap=L,
                          tau_n=b / q, b_n=b, m_n=m, resonant=resonant,
                          blocks=blocks, split_blocks=split)


def _block_max(phi: np.ndarray, x1: int, lo: int, hi: int) -> float:
    if hi < lo:
        return 0.0
    if lo < x1 or hi >= x1 + phi.size:
        raise ValueError(f"block [{lo}, {hi}] not covered by phi")
    return float(np.max(np.abs(phi[lo - x1:hi - x1 + 1])))


def r_table(phi: np.ndarray, x1: int, part: ScalePartition) -> dict[int, float]:
    """Exact max of |phi| over each block; phi[0] sits at site x1."""
    phi = np.asarray(phi, dtype=np.float64)
    return {ell: _block_max(phi, x1, lo, hi)
            for ell, (lo, hi) in part.blocks.items()}


def split_r_table(phi: np.ndarray, x1: int,
                  part: ScalePartition) -> dict[int, tuple[float, float]]:
    """Maxima over the two half-blocks on either side of the deep-cosine
    site; empty halves (|m_n| = b_n) report 0."""
    phi = np.asarray(phi, dtype=np.float64)
    return {ell: (_block_max(phi, x1, *minus), _block_max(phi, x1, *plus))
            for ell, (minus, plus) in part.split_blocks.items()}


# ---------------------------------------------------------------------------
# decay envelope


@dataclass
class DecayReport:
    """Per-eigenpair outcome of the envelope scan."""

    E: float
    lam: float
    L: float
    eps: float
    c: float
    trim: float
    in_regime: bool
    delta_est: float
    scales: list[int]
    scale_pass: dict[int, bool]
    violations: list[tuple[int, float, float]]
    envelope_pass: bool
    tight_pass: bool
    tight_violations: int
    fitted_rate: float
    first_pass_scale: int | None
    checked: int
    c0: float
    r_table: dict[int, float] = field(default_factory=dict)
    r_split: dict[int, tuple[float, float]] = field(default_factory=dict)
    profiles: dict[int, indices.ResonanceProfile] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "E": self.E, "lam": self.lam, "L": self.L, "eps": self.eps,
            "c": self.c, "trim": self.trim, "in_regime": self.in_regime,
            "delta_est": self.delta_est, "scales": list(self.scales),
            "scale_pass": {str(k): v for k, v in self.scale_pass.items()},
            "violations": [[k, lv, b] for k, lv, b in self.violations],
            "envelope_pass": self.envelope_pass,
            "tight_pass": self.tight_pass,
            "tight_violations": self.tight_violations,
            "fitted_rate": self.fitted_rate,
            "first_pass_scale": self.first_pass_scale,
            "checked": self.checked, "c0": self.c0,
            "r_table": {str(k): v for k, v in self.r_table.items()},
            "r_split": {str(k): list(v) for k, v in self.r_split.items()},
            "profiles": {str(k): p.to_json_dict()
                         for k, p in self.profiles.items()},
        }


def _window_ks(f: Frequency, n: int) -> tuple[int, int]:
    """Inclusive |k| range tested at scale n."""
    lo = -((-f.q(n)) // WINDOW_DIV)
    hi = (f.q(n + 1) - 1) // WINDOW_DIV
    return lo, hi


def measured_c0(phi: np.ndarray, x1: int, trim: float = 0.1,
                box: tuple[int, int] | None = None) -> float:
    """max |phi(k)|/|k| over the trimmed box, the measured growth constant."""
    phi = np.abs(np.asarray(phi, dtype=np.float64))
    x2 = x1 + phi.size - 1
    bx1, bx2 = (x1, x2) if box is None else box
    t = int(trim * (bx2 - bx1 + 1))
    lo = max(x1, bx1 + t)
    hi = min(x2, bx2 - t)
    best = 0.0
    k = np.arange(lo, hi + 1)
    k = k[k != 0]
    if k.size:
        best = float(np.max(phi[k - x1] / np.abs(k)))
    return best


def envelope_check(phi: np.ndarray, x1: int, params: ModelParams, eps: float,
                   scales: list[int], trim: float = 0.1,
                   c: float = ENVELOPE_SLACK, box: tuple[int, int] | None = None,
                   with_profiles: bool = True) -> DecayReport:
    """Scan ln|phi(k)| against -(L - delta_n - c*eps)|k| scale by scale.

    phi[0] sits at site x1 and the anchor sites 0, -1 must be covered; the
    input is rescaled to |phi(0)|^2 + |phi(-1)|^2 = 2 first.  `box` gives the
    physical box when phi covers only part of it (the trim margins are taken
    from the box, the data coverage from phi itself).  The tight variant
    (c = 1) is evaluated on the same points and reported, not gated.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not scales:
        raise ValueError("need at least one scale")
    scales = sorted(int(n) for n in scales)
    vals = np.abs(np.asarray(phi, dtype=np.float64))
    x2 = x1 + vals.size - 1
    if not (x1 <= -1 and x2 >= 0):
        raise ValueError("phi must cover the anchor sites -1 and 0")
    bx1, bx2 = (x1, x2) if box is None else box
    a0, am1 = vals[-x1], vals[-x1 - 1]
    if a0 < NORM_FLOOR and am1 < NORM_FLOOR:
        raise NotNormalizable(
            f"|phi(0)| = {a0:.3e} and |phi(-1)| = {am1:.3e}: "
            "re-center the box at the peak"
        )
    vals = vals * math.sqrt(2.0 / (a0 * a0 + am1 * am1))

    f, theta = params.alpha, params.theta
    L = cocycle.lyapunov_closed(params.lam, params.E)
    delta_est = indices.delta_estimate(f, theta, depth=max(scales),
                                       n_min=min(scales))
    in_regime = L > delta_est + c * eps + REGIME_MARGIN

    t = int(trim * (bx2 - bx1 + 1))
    lo_site = max(x1, bx1 + t)
    hi_site = min(x2, bx2 - t)

    violations: list[tuple[int, float, float]] = []
    tight_bad = 0
    checked = 0
    scale_pass: dict[int, bool] = {}
    fit_k: list[int] = []
    fit_ln: list[float] = []
    for n in scales:
        dn = indices.delta_n(f, theta, n)
        rate = L - dn - c * eps
        tight_rate = L - dn - TIGHT_SLACK * eps
        lo, hi = _window_ks(f, n)
        ok = True
        for sgn in (1, -1):
            for a in range(lo, hi + 1):
                k = sgn * a
                if not (lo_site <= k <= hi_site):
                    continue
                v = vals[k - x1]
                lnv = math.log(v) if v > 0.0 else -math.inf
                checked += 1
                fit_k.append(a)
                fit_ln.append(lnv)
                if lnv > -rate * a:
                    violations.append((k, lnv, -rate * a))
                    ok = False
                if lnv > -tight_rate * a:
                    tight_bad += 1
        scale_pass[n] = ok

    first_pass: int | None = None
    for n in reversed(scales):
        if scale_pass[n]:
            first_pass = n
        else:
            break

    good = [(k, lv) for k, lv in zip(fit_k, fit_ln) if math.isfinite(lv)]
    if len(good) >= 2 and len({k for k, _ in good}) >= 2:
        ak = np.array([k for k, _ in good], dtype=np.float64)
        av = np.array([lv for _, lv in good])
        fitted = float(np.polyfit(ak, av, 1)[0])
    else:
        fitted = math.nan

    profiles: dict[int, indices.ResonanceProfile] = {}
    if with_profiles:
        for n in scales:
            profiles[n] = indices.resonance_profile(f, theta, n)

    rt: dict[int, float] = {}
    rs: dict[int, tuple[float, float]] = {}
    for n in reversed(scales):
        try:
            part = partition(f, theta, n, L, eps)
        except (EmptyInterval, ValueError, SmallScale):
            continue
        spans = [s for b in part.blocks.values() for s in b]
        if min(spans) < x1 or max(spans) > x2:
            continue
        rt = r_table(vals, x1, part)
        if part.resonant:
            rs = split_r_table(vals, x1, part)
        break

    return DecayReport(
        E=params.E, lam=params.lam, L=L, eps=eps, c=c, trim=trim,
        in_regime=in_regime, delta_est=delta_est, scales=scales,
        scale_pass=scale_pass, violations=violations,
        envelope_pass=not violations,
        tight_pass=tight_bad == 0, tight_violations=tight_bad,
        fitted_rate=fitted, first_pass_scale=first_pass, checked=checked,
        c0=measured_c0(vals, x1, trim, (bx1, bx2)),
        r_table=rt, r_split=rs, profiles=profiles,
    )


# ---------------------------------------------------------------------------
# numerator growth


@dataclass
class NumeratorReport:
    """Measured growth exponents of the regularized numerator against the
    anti-resonance bound at one scale."""

    n: int
    q_n: int
    eps: float
    c0: float
    L_tilde: float
    beta_n: float
    delta_n: float
    m_n: int
    base_exponent: float
    base_bound: float
    base_pass: bool
    c0_needed: float
    ell_exponents: dict[int, float]
    ell_bounds: dict[int, float]
    ell_pass: dict[int, bool]

    def to_json_dict(self) -> dict:
        d = self.__dict__.copy()
        for key in ("ell_exponents", "ell_bounds", "ell_pass"):
            d[key] = {str(k): v for k, v in d[key].items()}
        return d


def g_weight_log(k: int, ell: int, profile: indices.ResonanceProfile,
                 eps: float) -> float:
    """log of the unified numerator weight g_{k,ell}."""
    q = profile.q_n
    if profile.beta_n >= profile.delta_n + DISPATCH_GAP * eps:
        lead = max(profile.delta_n * q, math.log(max(abs(ell), 1)))
        return lead - (profile.beta_n - 6.0 * eps) * q
    return 2.0 * eps * k


def numerator_bound_check(params: ModelParams, n: int, c0: float, eps: float,
                          ells: tuple[int, ...] = (-1, 0, 1),
                          profile: indices.ResonanceProfile | None = None,
                          ) -> NumeratorReport:
    """Measure (1/q_n) ln |Ptilde_{q_n - 1}| at the shifted phases
    theta + (m_n + ell*q_n + 1) alpha and compare with the anti-resonance
    bounds: C0 e^{q_n(Lt + delta_n - beta_n + 3 eps)} for the base family
    (ell = -1) and max(e^{delta_n q_n}, |ell|, 1) e^{q_n(Lt - beta_n + 4 eps)}
    for the translates.
    """
    f, theta = params.alpha, params.theta
    q = f.q(n)
    if profile is None:
        m, _ell, _kind = indices.theta_minimal(f, theta, n)
        beta = math.log(f.q(n + 1)) / q
        delta = indices.delta_n(f, theta, n)
    else:
        m, beta, delta = profile.m_n, profile.beta_n, profile.delta_n
    lt = cocycle.lyapunov_tilde(params.lam, params.E)

    def exponent(ell: int) -> float:
        sl = cocycle.det_Ptilde(params.shifted(m + ell * q + 1), q - 1)
        return sl.log / q if sl.sign != 0 else -math.inf

    base_exp = exponent(-1)
    base_bound = lt + delta - beta + 3.0 * eps + math.log(c0) / q
    needed = math.exp(q * (base_exp - (lt + delta - beta + 3.0 * eps)))
    exps: dict[int, float] = {}
    bounds: dict[int, float] = {}
    passed: dict[int, bool] = {}
    for ell in ells:
        e = exponent(ell)
        b = (lt - beta + 4.0 * eps
             + max(delta, math.log(max(abs(ell), 1)) / q, 0.0))
        exps[ell], bounds[ell], passed[ell] = e, b, e <= b
    return NumeratorReport(
        n=n, q_n=q, eps=eps, c0=c0, L_tilde=lt, beta_n=beta, delta_n=delta,
        m_n=m, base_exponent=base_exp, base_bound=base_bound,
        base_pass=base_exp <= base_bound, c0_needed=needed,
        ell_exponents=exps, ell_bounds=bounds, ell_pass=passed,
    )


# ---------------------------------------------------------------------------
# block recursion


@dataclass
class RecursionCheck:
    ell: int
    margin: float
    satisfied: bool
    in_range: bool


def block_recursion_diagnostic(phi: np.ndarray, x1: int,
                               part: ScalePartition,
                               profile: indices.ResonanceProfile,
                               slack: float | None = None,
                               ) -> dict[int, RecursionCheck]:
    """Check r_ell <= e^{slack*eps*q_n} e^{-q_n L}/max(|ell|,1)
    * max(r_{ell-1}, r_{ell+1}) * (dispatch factor) numerically per block.

    A diagnostic, not a gate: margin > 0 means the inequality holds with
    room e^{margin}.  in_range marks |ell| <= q_{n+1}/(6 q_n), where the
    inequality is asserted; outside it is merely measured.
    """
    if slack is None:
        slack = RECURSION_SLACK_RES if part.resonant else RECURSION_SLACK
    r = r_table(phi, x1, part)
    q, eps, L = part.q_n, part.eps, part.lyap
    if profile.beta_n >= profile.delta_n + DISPATCH_GAP * eps:
        def dispatch(ell: int) -> float:
            return max(math.log(max(abs(ell), 1)), profile.delta_n * q)
    else:
        def dispatch(ell: int) -> float:
            return profile.beta_n * q
    out: dict[int, RecursionCheck] = {}
    for ell in sorted(r):
        if ell == 0 or (ell - 1) not in r or (ell + 1) not in r:
            continue
        neighbor = max(r[ell - 1], r[ell + 1])
        rhs = (slack * eps * q - q * L - math.log(max(abs(ell), 1))
               + (math.log(neighbor) if neighbor > 0 else -math.inf)
               + dispatch(ell))
        lhs = math.log(r[ell]) if r[ell] > 0 else -math.inf
        if lhs == -math.inf:
            margin = math.inf
        else:
            margin = rhs - lhs
        out[ell] = RecursionCheck(
            ell=ell, margin=margin, satisfied=margin >= 0,
            in_range=abs(ell) * 6 * q <= part.q_n1,
        )
    return out


# ---------------------------------------------------------------------------
# experiment driver


def _tail_log_profiles(diag: np.ndarray, evals: np.ndarray,
                       peaks: np.ndarray, w: int) -> np.ndarray:
    """ln|psi_j(peak_j + d)| for d in [-w, w], one row per eigenvalue, from
    three-term recursions started at the box edges with Dirichlet data.

    The left recursion is used up to each peak, the right recursion from it,
    which keeps every step in its locally growing direction; rows are only
    fixed up to additive constants (one per side, equal at the peak column).
    """
    n = diag.size
    m = evals.size
    out = np.full((m, 2 * w + 1), np.nan)
    cols = np.arange(m)

    def sweep(sites: range, side: int) -> None:
        # each sweep carries its own scale, so its span is normalized by its
        # own value at the peak column (recorded at offset 0, written only
        # by the right sweep to keep the column single-valued)
        v_next = np.zeros(m)
        v_cur = np.ones(m)
        logs = np.zeros(m)
        at_peak = np.zeros(m)
        lo_off = 0 if side > 0 else -w
        hi_off = w if side > 0 else 0
        for k in sites:
            offs = k - peaks
            mask = (offs >= lo_off) & (offs <= hi_off)
            if np.any(mask):
                with np.errstate(divide="ignore"):
                    lv = logs[mask] + np.log(np.abs(v_cur[mask]))
                here = offs[mask] == 0
                at_peak[cols[mask][here]] = lv[here]
                out[cols[mask], w + offs[mask]] = lv
            if k != sites[-1]:
                v_new = (evals - diag[k]) * v_cur - v_next
                v_next = v_cur
                v_cur = v_new
                a = np.abs(v_cur)
                big = a > 1e120
                if np.any(big):
                    s = a[big]
                    v_cur[big] /= s
                    v_next[big] /= s
                    logs[big] += np.log(s)
        half = slice(w, None) if side > 0 else slice(None, w + 1)
        out[:, half] -= at_peak[:, None]

    sweep(range(0, n), -1)            # left edge inward, rows left of peak
    sweep(range(n - 1, -1, -1), +1)   # right edge inward, rows right of peak
    return out


def decay_experiment(params: ModelParams, x1: int, x2: int, eps: float,
                     scales: list[int] | None = None, trim: float = 0.1,
                     c: float = ENVELOPE_SLACK,
                     which: str | tuple[float, float] = "all",
                     with_profiles: bool = True,
                     ) -> tuple[list[DecayReport], list[tuple[float, str]]]:
    """Solve the box, re-center every eigenvector at its peak, rebuild the
    tail magnitudes by edge-inward recursion, and run envelope_check per
    pair.  Returns (reports, skipped) with skipped as (E, reason) pairs.
    """
    box = spectrum.build_box(params, x1, x2)
    pairs = spectrum.eigensolve(box, which=which)
    f = params.alpha
    size = x2 - x1 + 1
    t = int(trim * size)
    if scales is None:
        reach = min(-x1, x2) - t
        scales = []
        for n in range(1, f.depth - 1):
            lo, hi = _window_ks(f, n)
            if lo > reach:
                break
            if f.q(n) >= indices.SMALL_SCALE and lo <= hi <= reach:
                scales.append(n)
    if not scales:
        raise ValueError("no usable scales for this box and trim")
    w = max(_window_ks(f, n)[1] for n in scales) + 8

    evals = np.array([p.E for p in pairs])
    vecs = np.array([p.vector for p in pairs])
    peaks = np.argmax(np.abs(vecs), axis=1)
    prof = _tail_log_profiles(box.diag, evals, peaks, w)

    reports: list[DecayReport] = []
    skipped: list[tuple[float, str]] = []
    for j, pair in enumerate(pairs):
        p = int(peaks[j])
        site = x1 + p
        if p == 0:
            skipped.append((pair.E, "peak at the left box edge"))
            continue
        lo_off = -min(w, p)
        hi_off = min(w, size - 1 - p)
        row = prof[j, w + lo_off:w + hi_off + 1]
        sub = np.exp(row)
        pj = ModelParams(params.lam, float(pair.E), f, params.site(site))
        try:
            reports.append(envelope_check(
                sub, lo_off, pj, eps, scales, trim=trim, c=c,
                box=(x1 - site, x2 - site), with_profiles=with_profiles))
        except (NotNormalizable, SingularPhase) as exc:
            skipped.append((pair.E, str(exc)))
    return reports, skipped
