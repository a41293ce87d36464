"""Transfer-matrix products, box determinants, Lyapunov exponents."""

import math
from fractions import Fraction

import gmpy2
import numpy as np
import pytest
from gmpy2 import mpfr

from marylab import cf, cocycle, hp, indices
from marylab.cocycle import ModelParams, ScaledMatrix, SignedLog
from marylab.errors import SingularSite

GOLDEN = cf.golden_mean(30)
THETA = cf.TorusPoint.make(Fraction(2716458297, 10**10))
PBASE = ModelParams(2.0, 0.0, GOLDEN, THETA)
PSOFT = ModelParams(1.3, -0.8, GOLDEN, cf.TorusPoint.make(Fraction(1, 7)))

LN_SILVER = math.log(1.0 + math.sqrt(2.0))  # exponent at lam=2, E=0


# ---------------------------------------------------------------- oracles

def dense_det_logabs(f, theta_frac, lam, E, k, bits=512):
    """ln|det|, sign of (E - H) on sites 0..k-1 by full LU at `bits` bits.

    No recurrence: builds the k x k matrix and eliminates with partial
    pivoting, so it shares nothing with the implementation under test.
    """
    with hp.ctx(bits):
        th = hp.to_mpfr(theta_frac, bits)
        lamm = hp.to_mpfr(lam, bits)
        Em = hp.to_mpfr(E, bits)
        M = [[mpfr(0) for _ in range(k)] for _ in range(k)]
        for i in range(k):
            ph = th + i * f.value
            ph -= gmpy2.floor(ph)
            M[i][i] = Em - lamm * hp.sinpi(ph) / hp.cospi(ph)
            if i + 1 < k:
                M[i][i + 1] = mpfr(-1)
                M[i + 1][i] = mpfr(-1)
        sign = 1
        logabs = mpfr(0)
        for col in range(k):
            piv = max(range(col, k), key=lambda r: abs(M[r][col]))
            if M[piv][col] == 0:
                return 0, float("-inf")
            if piv != col:
                M[col], M[piv] = M[piv], M[col]
                sign = -sign
            pv = M[col][col]
            logabs += gmpy2.log(abs(pv))
            if pv < 0:
                sign = -sign
            for r in range(col + 1, k):
                if M[r][col] != 0:
                    fac = M[r][col] / pv
                    for c in range(col, k):
                        M[r][c] -= fac * M[col][c]
        return sign, float(logabs)


def exponent_bisect(lam, E, bits=256):
    """Solve e^L + e^-L = R for L >= 0 by bisection, no acosh involved."""
    with hp.ctx(bits):
        R = (gmpy2.sqrt((2 + mpfr(E)) ** 2 + mpfr(lam) ** 2)
             + gmpy2.sqrt((2 - mpfr(E)) ** 2 + mpfr(lam) ** 2)) / 2
        lo, hi = mpfr(0), mpfr(10)
        for _ in range(bits):
            mid = (lo + hi) / 2
            if gmpy2.exp(mid) + gmpy2.exp(-mid) < R:
                lo = mid
            else:
                hi = mid
        return float((lo + hi) / 2)


def window_log_cosines(theta, f, start, size):
    """[ln|cos(pi(theta + j alpha))| for j = start..start+size-1], mpfr."""
    base = f.shift(theta, start) if start else theta
    out = []
    for _, ph, _ in cocycle._site_stream(base, f, size):
        out.append(float(hp.log_abs(hp.cospi(ph))))
    return out


def dir_product(params, k):
    """Plain numpy product of the regularized steps, highest site leftmost."""
    out = np.eye(2)
    for j in range(k):
        out = cocycle.step_F(params, j) @ out
    return out


def rel_diff(a: ScaledMatrix, b: ScaledMatrix) -> float:
    """Relative difference of two scaled matrices after aligning the scales."""
    return float(np.abs(a.m * math.exp(a.log_scale - b.log_scale) - b.m).max()
                 / np.abs(b.m).max())


# ---------------------------------------------------------------- one step

def test_step_tangent_quarter_phase():
    p = ModelParams(2.0, 0.0, GOLDEN, cf.TorusPoint.make(Fraction(1, 4)))
    assert np.array_equal(cocycle.step_A(p), [[-2.0, -1.0], [1.0, 0.0]])


def test_step_tangent_unimodular():
    rng = np.random.default_rng(3)
    for _ in range(20):
        t = cf.TorusPoint.make(Fraction(int(rng.integers(1, 10**9)), 10**9))
        p = ModelParams(float(rng.uniform(0.2, 4)), float(rng.uniform(-3, 3)),
                        GOLDEN, t)
        a = cocycle.step_A(p, int(rng.integers(-50, 50)))
        # [[x, -1], [1, 0]] has determinant exactly one
        assert a[0, 1] * a[1, 0] == -1.0 and a[1, 1] == 0.0


def test_step_pole_raises():
    p = ModelParams(2.0, 0.0, GOLDEN, cf.TorusPoint.make(Fraction(1, 2)))
    with pytest.raises(SingularSite):
        cocycle.step_A(p)
    # the regularized step collapses to [[-lam, 0], [0, 0]] instead
    f = cocycle.step_F(p)
    assert np.allclose(f, [[-2.0, 0.0], [0.0, 0.0]], atol=1e-77)


def test_step_regularized_base_cases():
    p = ModelParams(2.0, 1.0, GOLDEN, cf.TorusPoint.make(0))
    assert np.array_equal(cocycle.step_F(p), [[1.0, -1.0], [1.0, 0.0]])
    rng = np.random.default_rng(4)
    for _ in range(20):
        t = cf.TorusPoint.make(Fraction(int(rng.integers(1, 10**9)), 10**9))
        p = ModelParams(1.7, 0.4, GOLDEN, t)
        k = int(rng.integers(-30, 30))
        c = float(hp.cospi(p.site(k).value))
        f = cocycle.step_F(p, k)
        assert abs(np.linalg.det(f) - c * c) <= 1e-12 * c * c
        if abs(c) > 1e-3:  # compare against the scaled singular step
            assert np.allclose(f, c * cocycle.step_A(p, k), rtol=1e-12)


def test_params_validation():
    with pytest.raises(ValueError, match="positive"):
        ModelParams(0.0, 1.0, GOLDEN, THETA)
    p = ModelParams(1.0, 0.0, GOLDEN, Fraction(1, 3))  # coerced
    assert isinstance(p.theta, cf.TorusPoint)
    s = p.shifted(7)
    assert s.theta.value == p.site(7).value
    assert s.lam == p.lam and s.alpha is p.alpha


# ---------------------------------------------------------------- products

def test_product_identity_and_base_case():
    ident = cocycle.product_F(PBASE, 0)
    assert np.array_equal(ident.m, np.eye(2)) and ident.log_scale == 0.0
    one = cocycle.product_F(PBASE, 1)
    assert np.abs(one.value() - cocycle.step_F(PBASE)).max() < 1e-14


def test_product_matches_direct_small():
    for params in (PBASE, PSOFT):
        for k in (2, 3, 5, 6):
            direct = dir_product(params, k)
            got = cocycle.product_F(params, k).value()
            assert np.abs(got - direct).max() <= 1e-12 * np.abs(direct).max()


def test_product_cocycle_property():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(0, 1001))
        m = int(rng.integers(0, 1001))
        lhs = cocycle.product_F(PBASE, k + m)
        rhs = cocycle.product_F(PBASE.shifted(k), m) @ cocycle.product_F(PBASE, k)
        worst = max(worst, rel_diff(lhs, rhs))
    assert worst <= 1e-8


def test_product_split_invariance():
    full = cocycle.product_F(PBASE, 5000)
    for j in (1, 17, 977, 2500, 4999):
        split = (cocycle.product_F(PBASE.shifted(j), 5000 - j)
                 @ cocycle.product_F(PBASE, j))
        assert rel_diff(full, split) <= 1e-10


def test_product_negative_single_step():
    got = cocycle.product_F(PBASE, -1).value()
    want = np.linalg.inv(cocycle.step_F(PBASE.shifted(-1)))
    assert np.abs(got - want).max() <= 1e-12 * np.abs(want).max()


def test_product_negative_inverts_forward():
    # conditioning eats ~e^{2kL} of the 1e-16 entry noise, so the identity
    # is checkable in doubles only while k*L stays small
    cases = [(PBASE, 8), (ModelParams(0.5, 0.3, GOLDEN, THETA), 20),
             (ModelParams(0.5, 0.3, GOLDEN, THETA), 30)]
    for params, k in cases:
        back = cocycle.product_F(params, -k)
        fwd = cocycle.product_F(params.shifted(-k), k)
        assert np.abs((back @ fwd).value() - np.eye(2)).max() <= 1e-8
        backA = cocycle.product_A(params, -k)
        fwdA = cocycle.product_A(params.shifted(-k), k)
        assert np.abs((backA @ fwdA).value() - np.eye(2)).max() <= 1e-8


def test_product_pole_in_window():
    p = ModelParams(2.0, 0.0, GOLDEN, cf.TorusPoint.make(Fraction(1, 2)))
    with pytest.raises(SingularSite):
        cocycle.product_A(p, 3)
    m = cocycle.product_F(p, 3)  # regularized product stays finite
    assert np.isfinite(m.m).all() and np.isfinite(m.log_scale)


def test_product_length_cap():
    with pytest.raises(ValueError, match="exceeds"):
        cocycle.product_F(PBASE, 10**7 + 1)
    with pytest.raises(ValueError, match="exceeds"):
        cocycle.product_A(PBASE, -(10**7 + 1))


def test_scaled_matrix_normalization():
    big = ScaledMatrix.wrap(np.array([[3e200, 1.0], [0.0, -2e199]]))
    assert 0.5 <= np.abs(big.m).max() <= 2.0
    assert abs(big.log_scale - math.log(3e200)) < 1e-12
    tiny = ScaledMatrix.wrap(np.array([[1e-280, 0.0], [0.0, 0.0]]), 5.0)
    assert np.abs(tiny.m).max() == 1.0
    assert abs(tiny.log_scale - (5.0 + math.log(1e-280))) < 1e-12
    in_band = ScaledMatrix.wrap(np.array([[0.7, 0.0], [0.0, 0.0]]))
    assert in_band.log_scale == 0.0 and in_band.m[0, 0] == 0.7
    zero = ScaledMatrix.wrap(np.zeros((2, 2)))
    assert np.array_equal(zero.value(), np.zeros((2, 2)))
    with pytest.raises(ValueError, match="band"):
        ScaledMatrix(np.array([[5.0, 0.0], [0.0, 0.0]]), 0.0)
    e = ScaledMatrix.wrap(np.array([[-4.0, 0.0], [2.0, 0.0]])).entry(0, 0)
    assert e.sign == -1 and abs(e.log - math.log(4.0)) < 1e-15
    assert ScaledMatrix.identity().entry(0, 1) == SignedLog(0, float("-inf"))


def test_scaled_matrix_adjugate():
    m = ScaledMatrix.wrap(np.array([[1.5, -0.25], [2.0, 0.5]]), 3.0)
    adj = m.adjugate()
    want = np.array([[0.5, 0.25], [-2.0, 1.5]]) * math.exp(3.0)
    assert np.abs(adj.value() - want).max() <= 1e-12 * np.abs(want).max()


# ------------------------------------------------------------ determinants

def test_det_first_orders():
    t = float(hp.tanpi(THETA.value))
    d1 = cocycle.det_P(PBASE, 1)
    assert abs(d1.to_float() - (0.0 - 2.0 * t)) <= 1e-14 * abs(2.0 * t)
    t1 = float(hp.tanpi(PBASE.site(1).value))
    d2 = cocycle.det_P(PBASE, 2)
    want = (-2.0 * t) * (-2.0 * t1) - 1.0
    assert abs(d2.to_float() - want) <= 1e-13 * abs(want)
    pair = cocycle.det_pair(PBASE, 0)
    assert pair.cur == SignedLog(1, 0.0)
    assert pair.prev.sign == 0 and pair.prev.log == float("-inf")


def test_det_pair_is_consecutive():
    pair = cocycle.det_pair(PSOFT, 17)
    solo = cocycle.det_P(PSOFT, 16)
    assert pair.prev.sign == solo.sign
    assert abs(pair.prev.log - solo.log) <= 1e-12


def test_det_matches_dense_oracle():
    rng = np.random.default_rng(7)
    for _ in range(4):
        lam = float(rng.uniform(0.5, 3.0))
        E = float(rng.uniform(-2, 2))
        tf = Fraction(int(rng.integers(1, 10**9)), 10**9)
        want_sign, want_log = dense_det_logabs(GOLDEN, tf, lam, E, 40)
        got = cocycle.det_P(ModelParams(lam, E, GOLDEN, cf.TorusPoint.make(tf)), 40)
        assert got.sign == want_sign
        assert abs(got.log - want_log) <= 1e-10 * max(1.0, abs(want_log))


def test_det_equals_tangent_product_entry():
    # upper-left of the singular-step product is the box determinant
    for k in (1, 2, 7, 12, 20):
        entry = cocycle.product_A(PSOFT, k).entry(0, 0)
        det = cocycle.det_P(PSOFT, k)
        assert entry.sign == det.sign
        assert abs(entry.log - det.log) <= 1e-8 * max(1.0, abs(det.log))


def test_det_singular_site_raises():
    p = ModelParams(2.0, 0.0, GOLDEN, cf.TorusPoint.make(Fraction(1, 2)))
    with pytest.raises(SingularSite, match="site 0"):
        cocycle.det_P(p, 1)
    hidden = ModelParams(2.0, 0.0, GOLDEN,
                         GOLDEN.shift(cf.TorusPoint.make(Fraction(1, 2)), -5))
    with pytest.raises(SingularSite, match="site 5"):
        cocycle.det_P(hidden, 8)
    assert cocycle.det_P(hidden, 4).sign != 0  # stops short of the pole


def test_det_rejects_negative_order():
    with pytest.raises(ValueError):
        cocycle.det_P(PBASE, -1)
    with pytest.raises(ValueError):
        cocycle.det_Ptilde(PBASE, -2)


def test_regularized_det_identity():
    # Ptilde_k = (prod cos) * P_k, computed by two unrelated recurrences
    for params in (PBASE, PSOFT):
        for k in (1, 5, 37, 200):
            dp = cocycle.det_P(params, k)
            dt = cocycle.det_Ptilde(params, k)
            cs = cocycle.cosine_log_sum(params, k)
            assert dt.sign == dp.sign * cs.sign
            assert abs(dt.log - (dp.log + cs.log)) <= 1e-10


def test_regularized_det_in_product_corner():
    for params in (PBASE, PSOFT):
        for k in (1, 3, 21, 50, 200):
            entry = cocycle.product_F(params, k).entry(0, 0)
            dt = cocycle.det_Ptilde(params, k)
            assert entry.sign == dt.sign
            assert abs(entry.log - dt.log) <= 1e-8 * max(1.0, abs(dt.log))


def test_product_entries_are_determinant_lattice():
    # all four entries factor through the regularized determinants
    for params in (PBASE, PSOFT):
        c0 = float(hp.cospi(params.theta.value))
        shifted = params.shifted(1)
        for k in (1, 2, 3, 5, 8, 13, 21, 34, 50):
            got = cocycle.product_F(params, k)
            ck1 = float(hp.cospi(params.site(k - 1).value))
            want = np.array([
                [cocycle.det_Ptilde(params, k).to_float(),
                 -cocycle.det_Ptilde(shifted, k - 1).to_float() * c0],
                [cocycle.det_Ptilde(params, k - 1).to_float() * ck1,
                 (-cocycle.det_Ptilde(shifted, k - 2).to_float() * c0 * ck1)
                 if k >= 2 else 0.0],
            ])
            scale = math.exp(got.log_scale) * float(np.abs(got.m).max())
            assert np.abs(got.value() - want).max() <= 1e-8 * scale


def test_tangent_product_entries_are_box_determinants():
    for params in (PBASE, PSOFT):
        shifted = params.shifted(1)
        for k in (1, 2, 3, 7, 12, 20):
            got = cocycle.product_A(params, k).value()
            want = np.array([
                [cocycle.det_P(params, k).to_float(),
                 -cocycle.det_P(shifted, k - 1).to_float()],
                [cocycle.det_P(params, k - 1).to_float(),
                 (-cocycle.det_P(shifted, k - 2).to_float()) if k >= 2 else 0.0],
            ])
            assert np.abs(got - want).max() <= 1e-8 * np.abs(got).max()


def test_determinant_invariants_small_scale():
    # reading det off the unit-band entries loses e^{2kL} of precision, so
    # the doubles can certify unimodularity only while k*L(lam,E) <~ 8
    cases = [(2.0, 0.0, Fraction(2716458297, 10**10), 8),
             (0.5, 0.3, Fraction(1, 7), 12),
             (1.0, -1.2, Fraction(5, 13), 9),
             (3.0, 1.5, Fraction(123456789, 10**9), 6)]
    for lam, E, tf, k in cases:
        p = ModelParams(lam, E, GOLDEN, cf.TorusPoint.make(tf))
        assert k * cocycle.lyapunov_closed(lam, E) < 8.0
        dA = cocycle.product_A(p, k).det_signed_log()
        assert dA.sign == 1 and abs(dA.log) <= 1e-8
        dF = cocycle.product_F(p, k).det_signed_log()
        cs = cocycle.cosine_log_sum(p, k)
        assert dF.sign == 1 and abs(dF.log - 2.0 * cs.log) <= 1e-8


# ---------------------------------------------------------------- exponents

def test_exponent_closed_form_frozen():
    assert abs(cocycle.lyapunov_closed(2.0, 0.0) - LN_SILVER) < 1e-14
    assert abs(cocycle.lyapunov_closed(2.0, 0.0) - 0.881373587019543) < 1e-12
    assert abs(cocycle.lyapunov_closed(2.0, 2.0) - 1.0612750619050357) < 1e-12
    assert cocycle.lyapunov_closed(0.0, 0.0) == 0.0
    assert 0.0 <= cocycle.lyapunov_closed(1e-9, 0.0) < 1e-4
    with pytest.raises(ValueError):
        cocycle.lyapunov_closed(-1.0, 0.0)


def test_exponent_matches_root_finding():
    for lam, E in [(2.0, 0.0), (2.0, 2.0), (0.1, 0.0), (0.7, -1.3),
                   (3.0, 5.0), (1.0, 0.0)]:
        assert abs(cocycle.lyapunov_closed(lam, E)
                   - exponent_bisect(lam, E)) < 1e-12


def test_exponent_symmetry_and_monotonicity():
    lams = np.linspace(0.1, 4.0, 14)
    Es = np.linspace(-3.0, 3.0, 25)
    for E in Es:
        for i, lam in enumerate(lams):
            assert abs(cocycle.lyapunov_closed(lam, E)
                       - cocycle.lyapunov_closed(lam, -E)) < 1e-13
            if i:
                assert (cocycle.lyapunov_closed(lam, E)
                        > cocycle.lyapunov_closed(lams[i - 1], E))
    assert abs(cocycle.lyapunov_tilde(2.0, 0.0)
               - (LN_SILVER - math.log(2.0))) < 1e-15


def test_exponent_empirical_three_couplings():
    for lam, E in [(2.0, 0.0), (2.0, 2.0), (0.1, 0.0)]:
        p = ModelParams(lam, E, GOLDEN, THETA)
        est = cocycle.lyapunov_empirical(p, 10**5, 32)
        closed = cocycle.lyapunov_closed(lam, E)
        assert abs(est.value - closed) <= 0.02
        assert 0.0 < est.stderr <= 0.01
        assert len(est.samples) == 32


def test_exponent_empirical_deterministic():
    a = cocycle.lyapunov_empirical(PBASE, 1000, 6)
    b = cocycle.lyapunov_empirical(PBASE, 1000, 6)
    assert a.value == b.value and a.stderr == b.stderr
    with pytest.raises(ValueError, match="asymptotic"):
        cocycle.lyapunov_empirical(PBASE, 100, 8)
    with pytest.raises(ValueError):
        cocycle.lyapunov_empirical(PBASE, 1000, 0)


def test_exponent_from_long_product():
    m = cocycle.product_F(PBASE, 10**6)
    rate = m.norm_log() / 10**6
    assert abs(rate - cocycle.lyapunov_tilde(2.0, 0.0)) <= 1e-4


def test_regularized_growth_stays_below_exponent():
    # (1/k) ln|Ptilde_k| <= Ltilde + 0.05 at depth, and the prefactor needed
    # to cover all k <= 1200 stays small
    lt = cocycle.lyapunov_tilde(2.0, 0.0)
    deep = cocycle.det_Ptilde(PBASE, 10**4)
    assert deep.log / 10**4 <= lt + 0.05
    c_fit = 0.0
    for k in range(1, 1201, 13):
        v = cocycle.det_Ptilde(PBASE, k)
        c_fit = max(c_fit, math.exp(v.log - (lt + 0.05) * k))
    assert c_fit <= 10.0


# ------------------------------------------------- cosine sums over windows

def test_window_deviation_trivial_scale():
    f = cf.Frequency.from_quotients([2, 3, 4])
    S, j0 = cocycle.lana_check(f, cf.TorusPoint.make(Fraction(3, 10)), 0)
    assert S == 0.0 and j0 == 0  # q_0 = 1: nothing left after removing j0


def test_window_deviation_logarithmic_across_scales():
    theta = cf.TorusPoint.make(Fraction(3, 10))
    ratios = []
    for n in range(1, GOLDEN.depth + 1):
        q = GOLDEN.q(n)
        if 89 <= q <= 10946:
            S, j0 = cocycle.lana_check(GOLDEN, theta, n)
            assert 0 <= j0 < q
            ratios.append(abs(S) / math.log(q))
    assert len(ratios) == 11
    assert max(ratios) <= 10.0
    assert max(ratios) >= 0.3  # the deviation really is of order ln q


def test_window_deviation_removes_true_minimum():
    theta = cf.TorusPoint.make(Fraction(3, 10))
    S, j0 = cocycle.lana_check(GOLDEN, theta, 11)  # q_11 = 144
    vals = [(abs(float(hp.cospi(ph))), j)
            for j, ph, _ in cocycle._site_stream(theta, GOLDEN, 144)]
    assert j0 == min(vals)[1]


def test_window_product_upper_bound():
    # prod |cos| <= C e^{size (eps - ln 2)} inf |cos| with a modest C
    rng = np.random.default_rng(11)
    eps = 0.05
    c_fit = 0.0
    for _ in range(100):
        start = int(rng.integers(-10**6, 10**6))
        size = int(rng.integers(2, 500))
        logs = window_log_cosines(THETA, GOLDEN, start, size)
        need = sum(logs) - (size * (eps - math.log(2.0)) + min(logs))
        c_fit = max(c_fit, math.exp(need))
    assert c_fit <= 100.0


def test_interval_cosine_product_lower_bound():
    # windows between anti-resonance sites keep prod |cos| above
    # e^{-eps (2 q_n - size)} 2^{-size}
    eps = 0.05
    min_slack = math.inf
    for n in (10, 12, 14, 16):
        q = GOLDEN.q(n)
        m_n, _, _ = indices.theta_minimal(GOLDEN, THETA, n)
        rng = np.random.default_rng(100 + n)
        for _ in range(20):
            a = int(rng.integers(1, q - 1))
            b = int(rng.integers(a, q - 1))
            size = b - a + 1
            total = sum(window_log_cosines(THETA, GOLDEN, m_n + a, size))
            bound = -eps * (2 * q - size) - math.log(2.0) * size
            min_slack = min(min_slack, total - bound)
    assert min_slack >= 0.0


def test_interval_transfer_norm_bounds():
    eps = 0.05
    lam, E = 2.0, 0.75
    L = cocycle.lyapunov_closed(lam, E)
    params = ModelParams(lam, E, GOLDEN, THETA)
    for n in (10, 12, 14):
        q = GOLDEN.q(n)
        m_n, _, _ = indices.theta_minimal(GOLDEN, THETA, n)
        c0 = indices.c_table(GOLDEN, THETA, n)[0]
        rng = np.random.default_rng(200 + n)
        for _ in range(12):
            # interval strictly between anti-resonance sites
            a = int(rng.integers(1, q - 1))
            b = int(rng.integers(a, q - 1))
            size = b - a + 1
            norm_log = cocycle.product_A(params.shifted(m_n + a), size).norm_log()
            assert norm_log <= 3 * eps * q + L * size
            # interval straddling the anti-resonance site m_n
            l1 = m_n - int(rng.integers(1, q - 1))
            size = m_n + int(rng.integers(1, q - 1)) - l1 + 1
            norm_log = cocycle.product_A(params.shifted(l1), size).norm_log()
            assert norm_log <= 7 * eps * q + L * size - math.log(c0)
