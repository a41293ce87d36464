"""numpy implementations of the hot kernels.

Selected when the compiled extension is unavailable or when
MARYLAB_BACKEND=fallback.  Semantics match marylab._ckernels; only the
execution strategy differs (tree reduction and batching instead of C loops).

Phase sequences theta + j*alpha are generated from a double-double split of
alpha with exact chunk anchors, so the absolute phase error stays at a few
ulp independently of j.  cos/sin of pi*theta go through a nearest-(half-)
integer reduction so they keep relative accuracy near their zeros.
"""

from __future__ import annotations

import numpy as np

_CHUNK = 4096  # phases per anchor refresh; must stay a power of two
_EPS = np.finfo(np.float64).eps


def _two_sum(a: float, b: float) -> tuple[float, float]:
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _veltkamp(a: float) -> tuple[float, float]:
    t = 134217729.0 * a  # 2**27 + 1
    hi = t - (t - a)
    return hi, a - hi


def _phase_blocks(t_hi, t_lo, a_hi, a_lo, k, block=_CHUNK):
    """Yield arrays of frac(theta + j*alpha) for j = 0..k-1 in blocks."""
    ah1, ah2 = _veltkamp(a_hi)
    tail_step = ah2 + a_lo
    anchor_hi, anchor_lo = t_hi, t_lo
    j = np.arange(block, dtype=np.float64)
    p = j * ah1  # exact: ah1 has <= 27 significant bits, j < 2**12
    f1 = p - np.floor(p)
    tail = j * tail_step
    pos = 0
    while pos < k:
        c = min(block, k - pos)
        ph = anchor_hi + (f1[:c] + (anchor_lo + tail[:c]))
        ph -= np.floor(ph)
        yield ph
        pos += c
        if pos < k:
            # advance the anchor by block*alpha in double-double; block is a
            # power of two so both products below are exact
            da_hi = block * a_hi
            da_lo = block * a_lo
            s, e = _two_sum(anchor_hi, da_hi - np.floor(da_hi))
            lo = e + (anchor_lo + da_lo)
            s -= np.floor(s)
            anchor_hi, anchor_lo = _two_sum(s, lo)
            if anchor_hi >= 1.0:
                anchor_hi -= 1.0
            elif anchor_hi < 0.0:
                anchor_hi += 1.0


def sinpi(x):
    """sin(pi x), elementwise, relative-accurate near the zeros."""
    x = np.asarray(x, dtype=np.float64)
    r = np.round(x)
    s = np.sin(np.pi * (x - r))
    odd = (r.astype(np.int64) & 1).astype(bool)
    return np.where(odd, -s, s)


def cospi(x):
    """cos(pi x), elementwise, relative-accurate near the zeros."""
    x = np.asarray(x, dtype=np.float64)
    y = 0.5 - x
    r = np.round(y)
    s = np.sin(np.pi * (y - r))
    odd = (r.astype(np.int64) & 1).astype(bool)
    return np.where(odd, -s, s)


def _tree_product(mats: np.ndarray) -> tuple[np.ndarray, float]:
    """Product mats[-1] @ ... @ mats[0] by pairwise reduction with rescaling."""
    logs = np.zeros(mats.shape[0])
    while mats.shape[0] > 1:
        n = mats.shape[0]
        even = (n // 2) * 2
        prod = np.matmul(mats[1:even:2], mats[0:even:2])
        plogs = logs[1:even:2] + logs[0:even:2]
        if n % 2:
            prod = np.concatenate([prod, mats[even:]], axis=0)
            plogs = np.concatenate([plogs, logs[even:]], axis=0)
        sc = np.abs(prod).max(axis=(1, 2))
        sc = np.where(sc == 0.0, 1.0, sc)
        prod /= sc[:, None, None]
        mats = prod
        logs = plogs + np.log(sc)
    return mats[0], float(logs[0])


def f_product(t_hi, t_lo, a_hi, a_lo, E, lam, k):
    """Ordered product F(theta+(k-1)a) ... F(theta) of the cosine-regularized
    one-step matrices, with the cosine log-sum accumulated on the side.

    Returns (mat 2x2, log_scale, cos_log_sum, cos_neg_parity); the represented
    product is exp(log_scale) * mat.
    """
    total = np.eye(2)
    total_log = 0.0
    cos_log_sum = 0.0
    parity = 0
    for ph in _phase_blocks(t_hi, t_lo, a_hi, a_lo, k, block=1 << 14):
        c = cospi(ph)
        s = sinpi(ph)
        mats = np.zeros((ph.size, 2, 2))
        mats[:, 0, 0] = E * c - lam * s
        mats[:, 0, 1] = -c
        mats[:, 1, 0] = c
        block_mat, block_log = _tree_product(mats)
        total = block_mat @ total
        total_log += block_log
        sc = np.abs(total).max()
        if sc == 0.0:
            total_log = -np.inf
        else:
            total /= sc
            total_log += np.log(sc)
        with np.errstate(divide="ignore"):
            cos_log_sum += float(np.log(np.abs(c)).sum())
        parity ^= int(np.count_nonzero(c < 0.0) & 1)
    return total, total_log, cos_log_sum, parity


def ptilde_logs(thetas, a_hi, a_lo, E, lam, k):
    """Signed logs of Ptilde_k at each starting phase.

    Returns (signs int8, logabs float64); logabs is the true ln|Ptilde_k|.
    """
    th = np.ascontiguousarray(thetas, dtype=np.float64)
    n = th.size
    p_prev = np.zeros(n)
    p_cur = np.ones(n)
    logs = np.zeros(n)
    c_last = np.ones(n)
    ah1, ah2 = _veltkamp(a_hi)
    tail_step = ah2 + a_lo
    for j in range(k):
        pj = j * ah1  # exact for j < 2**26
        f1 = pj - np.floor(pj)
        ph = th + (f1 + j * tail_step)
        ph -= np.floor(ph)
        c = cospi(ph)
        s = sinpi(ph)
        p_new = (E * c - lam * s) * p_cur - c * c_last * p_prev
        p_prev = p_cur
        p_cur = p_new
        c_last = c
        sc = np.maximum(np.abs(p_cur), np.abs(p_prev))
        sc = np.where(sc == 0.0, 1.0, sc)
        p_cur /= sc
        p_prev /= sc
        with np.errstate(divide="ignore"):
            logs += np.log(sc)
    signs = np.sign(p_cur).astype(np.int8)
    with np.errstate(divide="ignore"):
        out = logs + np.log(np.abs(p_cur))
    return signs, out


def det_logs(pot, E):
    """Signed logs of det(E - H) over the leading sites of `pot`.

    Returns (signs int8, logabs float64), both of length len(pot)+1; entry j
    is the determinant over the first j sites (entry 0 is the empty product 1).
    """
    pot = np.ascontiguousarray(pot, dtype=np.float64)
    n = pot.size
    signs = np.empty(n + 1, dtype=np.int8)
    logs = np.empty(n + 1, dtype=np.float64)
    signs[0] = 1
    logs[0] = 0.0
    p_prev = 0.0
    p_cur = 1.0
    acc = 0.0
    for i in range(1, n + 1):
        p_new = (E - pot[i - 1]) * p_cur - p_prev
        p_prev = p_cur
        p_cur = p_new
        a = abs(p_cur)
        b = abs(p_prev)
        m = a if a > b else b
        if m > 1e240 or (m < 1e-240 and m > 0.0):
            p_cur /= m
            p_prev /= m
            acc += np.log(m)
        if p_cur == 0.0:
            signs[i] = 0
            logs[i] = -np.inf
        else:
            signs[i] = 1 if p_cur > 0 else -1
            logs[i] = acc + np.log(abs(p_cur))
    return signs, logs


def sturm_count(diag, x):
    """Number of eigenvalues of tridiag(1, diag, 1) strictly below x."""
    return int(sturm_counts(diag, np.array([x]))[0])


def sturm_counts(diag, xs):
    """Vectorized Sturm counts: eigenvalues of tridiag(1, diag, 1) below each x."""
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    cnt = np.zeros(xs.shape, dtype=np.int64)
    d = np.ones_like(xs)
    tiny = np.finfo(np.float64).tiny
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        d = diag[0] - xs
        d = np.where(d == 0.0, -tiny, d)
        cnt += d < 0
        for i in range(1, diag.size):
            d = (diag[i] - xs) - 1.0 / d
            d = np.where(np.isnan(d), -tiny, d)
            d = np.where(d == 0.0, -tiny, d)
            cnt += d < 0
    return cnt


def bisect_eigenvalues(diag, i0, i1):
    """Eigenvalues of tridiag(1, diag, 1) with 0-based indices i0..i1 (inclusive,
    ascending), by Sturm-count bisection to near machine precision."""
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    idx = np.arange(i0, i1 + 1, dtype=np.int64)
    lo = np.full(idx.shape, float(diag.min()) - 2.0)
    hi = np.full(idx.shape, float(diag.max()) + 2.0)
    for _ in range(130):
        mid = 0.5 * (lo + hi)
        cnt = sturm_counts(diag, mid)
        go_right = cnt <= idx
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
        width = hi - lo
        if np.all(width <= 4.0 * _EPS * np.maximum(1.0, np.abs(lo))):
            break
    return 0.5 * (lo + hi)


def inverse_iteration(diag, Es, V0, iters):
    """Inverse iteration for tridiag(1, diag, 1) at each shift in Es.

    V0 has shape (len(Es), n).  Returns (V, resid): V row-normalized in the
    2-norm, resid the 2-norm of (H - E) v per row.  Solves use the Thomas
    recursion with scale-aware pivot perturbation, batched across shifts.
    """
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    Es = np.ascontiguousarray(Es, dtype=np.float64)
    n = diag.size
    m = Es.size
    V = np.ascontiguousarray(V0, dtype=np.float64).T.copy()  # (n, m)
    scale = max(1.0, float(np.abs(diag).max()) + float(np.abs(Es).max()) + 2.0)
    pert = _EPS * scale
    dshift = diag[:, None] - Es[None, :]  # (n, m)
    cp = np.empty((n, m))
    dp = np.empty((n, m))
    for _ in range(iters):
        V /= np.linalg.norm(V, axis=0)
        beta = dshift[0].copy()
        bad = np.abs(beta) < pert
        beta[bad] = np.where(beta[bad] < 0, -pert, pert)
        cp[0] = 1.0 / beta
        dp[0] = V[0] / beta
        for i in range(1, n):
            beta = dshift[i] - cp[i - 1]
            bad = np.abs(beta) < pert
            beta[bad] = np.where(beta[bad] < 0, -pert, pert)
            cp[i] = 1.0 / beta
            dp[i] = (V[i] - dp[i - 1]) / beta
        V[n - 1] = dp[n - 1]
        for i in range(n - 2, -1, -1):
            V[i] = dp[i] - cp[i] * V[i + 1]
        nrm = np.linalg.norm(V, axis=0)
        nrm = np.where(nrm == 0.0, 1.0, nrm)
        V /= nrm
    r = np.empty_like(V)
    r[0] = dshift[0] * V[0] + (V[1] if n > 1 else 0.0)
    if n > 1:
        r[n - 1] = V[n - 2] + dshift[n - 1] * V[n - 1]
        if n > 2:
            r[1:-1] = V[:-2] + dshift[1:-1] * V[1:-1] + V[2:]
    resid = np.linalg.norm(r, axis=0)
    return V.T.copy(), resid
