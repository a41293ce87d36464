# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels.

Same API and semantics as marylab.backends.fallback; see that module for the
contracts.  Phase sequences are stepped in double-double arithmetic so the
phase error stays at a few ulp independently of the step count.
"""

from libc.math cimport fabs, log, sin, nearbyint, M_PI, INFINITY

import numpy as np

cimport numpy as cnp

cnp.import_array()

DEF RESCALE_HI = 1e240
DEF RESCALE_LO = 1e-240


cdef inline double _sinpi(double x) nogil:
    cdef double r = nearbyint(x)
    cdef double s = sin(M_PI * (x - r))
    if (<long long> r) & 1:
        return -s
    return s


cdef inline double _cospi(double x) nogil:
    cdef double y = 0.5 - x
    cdef double r = nearbyint(y)
    cdef double s = sin(M_PI * (y - r))
    if (<long long> r) & 1:
        return -s
    return s


cdef inline void _dd_step(double* t_hi, double* t_lo, double a_hi, double a_lo) nogil:
    # (t_hi, t_lo) += (a_hi, a_lo), reduced mod 1 with t_hi in [0, 1)
    cdef double s = t_hi[0] + a_hi
    cdef double bb = s - t_hi[0]
    cdef double err = (t_hi[0] - (s - bb)) + (a_hi - bb)
    cdef double lo = t_lo[0] + a_lo + err
    if s >= 1.0:
        s -= 1.0
    cdef double hi = s + lo
    t_lo[0] = lo - (hi - s)
    if hi >= 1.0:
        hi -= 1.0
    elif hi < 0.0:
        hi += 1.0
    t_hi[0] = hi


def sinpi(x):
    return _sinpi_arr(np.ascontiguousarray(x, dtype=np.float64).ravel()).reshape(np.shape(x))


def cospi(x):
    return _cospi_arr(np.ascontiguousarray(x, dtype=np.float64).ravel()).reshape(np.shape(x))


def _sinpi_arr(const double[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _sinpi(x[i])
    return out


def _cospi_arr(const double[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _cospi(x[i])
    return out


def f_product(double t_hi, double t_lo, double a_hi, double a_lo,
              double E, double lam, long long k):
    """See marylab.backends.fallback.f_product."""
    cdef double m00 = 1.0, m01 = 0.0, m10 = 0.0, m11 = 1.0
    cdef double log_scale = 0.0, cos_log_sum = 0.0
    cdef int parity = 0
    cdef double c, s, f00, n00, n01, n10, n11, amax, t
    cdef long long j
    with nogil:
        for j in range(k):
            c = _cospi(t_hi)
            s = _sinpi(t_hi)
            f00 = E * c - lam * s
            n00 = f00 * m00 - c * m10
            n01 = f00 * m01 - c * m11
            n10 = c * m00
            n11 = c * m01
            m00 = n00
            m01 = n01
            m10 = n10
            m11 = n11
            cos_log_sum += log(fabs(c))
            if c < 0.0:
                parity ^= 1
            amax = fabs(m00)
            t = fabs(m01)
            if t > amax: amax = t
            t = fabs(m10)
            if t > amax: amax = t
            t = fabs(m11)
            if t > amax: amax = t
            if amax > RESCALE_HI or (amax < RESCALE_LO and amax > 0.0):
                m00 /= amax
                m01 /= amax
                m10 /= amax
                m11 /= amax
                log_scale += log(amax)
            _dd_step(&t_hi, &t_lo, a_hi, a_lo)
        amax = fabs(m00)
        t = fabs(m01)
        if t > amax: amax = t
        t = fabs(m10)
        if t > amax: amax = t
        t = fabs(m11)
        if t > amax: amax = t
        if amax > 0.0:
            m00 /= amax
            m01 /= amax
            m10 /= amax
            m11 /= amax
            log_scale += log(amax)
        else:
            log_scale = -INFINITY
    mat = np.array([[m00, m01], [m10, m11]])
    return mat, log_scale, cos_log_sum, parity


def ptilde_logs(thetas, double a_hi, double a_lo, double E, double lam, long long k):
    """See marylab.backends.fallback.ptilde_logs."""
    th = np.ascontiguousarray(thetas, dtype=np.float64)
    cdef const double[::1] tv = th
    cdef Py_ssize_t i, n = tv.shape[0]
    signs = np.empty(n, dtype=np.int8)
    logs = np.empty(n, dtype=np.float64)
    cdef signed char[::1] sv = signs
    cdef double[::1] lv = logs
    cdef double t_hi, t_lo, p_prev, p_cur, p_new, c, s, c_last, acc, m
    cdef long long j
    with nogil:
        for i in range(n):
            t_hi = tv[i]
            t_lo = 0.0
            p_prev = 0.0
            p_cur = 1.0
            c_last = 1.0
            acc = 0.0
            for j in range(k):
                c = _cospi(t_hi)
                s = _sinpi(t_hi)
                p_new = (E * c - lam * s) * p_cur - c * c_last * p_prev
                p_prev = p_cur
                p_cur = p_new
                c_last = c
                m = fabs(p_cur)
                if fabs(p_prev) > m:
                    m = fabs(p_prev)
                if m > RESCALE_HI or (m < RESCALE_LO and m > 0.0):
                    p_cur /= m
                    p_prev /= m
                    acc += log(m)
                _dd_step(&t_hi, &t_lo, a_hi, a_lo)
            if p_cur == 0.0:
                sv[i] = 0
                lv[i] = -INFINITY
            else:
                sv[i] = 1 if p_cur > 0.0 else -1
                lv[i] = acc + log(fabs(p_cur))
    return signs, logs


def det_logs(pot, double E):
    """See marylab.backends.fallback.det_logs."""
    p = np.ascontiguousarray(pot, dtype=np.float64)
    cdef const double[::1] pv = p
    cdef Py_ssize_t i, n = pv.shape[0]
    signs = np.empty(n + 1, dtype=np.int8)
    logs = np.empty(n + 1, dtype=np.float64)
    cdef signed char[::1] sv = signs
    cdef double[::1] lv = logs
    cdef double p_prev = 0.0, p_cur = 1.0, p_new, acc = 0.0, m
    sv[0] = 1
    lv[0] = 0.0
    with nogil:
        for i in range(1, n + 1):
            p_new = (E - pv[i - 1]) * p_cur - p_prev
            p_prev = p_cur
            p_cur = p_new
            m = fabs(p_cur)
            if fabs(p_prev) > m:
                m = fabs(p_prev)
            if m > RESCALE_HI or (m < RESCALE_LO and m > 0.0):
                p_cur /= m
                p_prev /= m
                acc += log(m)
            if p_cur == 0.0:
                sv[i] = 0
                lv[i] = -INFINITY
            else:
                sv[i] = 1 if p_cur > 0.0 else -1
                lv[i] = acc + log(fabs(p_cur))
    return signs, logs


cdef long long _sturm_one(const double[::1] diag, double x) nogil:
    cdef long long cnt = 0
    cdef Py_ssize_t i, n = diag.shape[0]
    cdef double d = diag[0] - x
    cdef double tiny = 2.2250738585072014e-308
    if d == 0.0:
        d = -tiny
    if d < 0.0:
        cnt += 1
    for i in range(1, n):
        d = (diag[i] - x) - 1.0 / d
        if d != d:  # NaN guard
            d = -tiny
        elif d == 0.0:
            d = -tiny
        if d < 0.0:
            cnt += 1
    return cnt


def sturm_count(diag, double x):
    d = np.ascontiguousarray(diag, dtype=np.float64)
    cdef const double[::1] dv = d
    return int(_sturm_one(dv, x))


def sturm_counts(diag, xs):
    d = np.ascontiguousarray(diag, dtype=np.float64)
    x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[::1] dv = d
    cdef const double[::1] xv = x
    cdef Py_ssize_t i, m = xv.shape[0]
    out = np.empty(m, dtype=np.int64)
    cdef long long[::1] ov = out
    with nogil:
        for i in range(m):
            ov[i] = _sturm_one(dv, xv[i])
    return out


def bisect_eigenvalues(diag, long long i0, long long i1):
    """See marylab.backends.fallback.bisect_eigenvalues."""
    d = np.ascontiguousarray(diag, dtype=np.float64)
    cdef const double[::1] dv = d
    cdef Py_ssize_t n = dv.shape[0]
    cdef Py_ssize_t m = i1 - i0 + 1
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double lo0 = dv[0], hi0 = dv[0]
    cdef Py_ssize_t i
    cdef long long idx, it
    cdef double lo, hi, mid, width, eps4 = 4.0 * 2.220446049250313e-16, ref
    for i in range(1, n):
        if dv[i] < lo0: lo0 = dv[i]
        if dv[i] > hi0: hi0 = dv[i]
    lo0 -= 2.0
    hi0 += 2.0
    with nogil:
        for i in range(m):
            idx = i0 + i
            lo = lo0
            hi = hi0
            for it in range(130):
                mid = 0.5 * (lo + hi)
                if _sturm_one(dv, mid) <= idx:
                    lo = mid
                else:
                    hi = mid
                width = hi - lo
                ref = fabs(lo)
                if ref < 1.0:
                    ref = 1.0
                if width <= eps4 * ref:
                    break
            ov[i] = 0.5 * (lo + hi)
    return out


def inverse_iteration(diag, Es, V0, long long iters):
    """See marylab.backends.fallback.inverse_iteration."""
    d = np.ascontiguousarray(diag, dtype=np.float64)
    e = np.ascontiguousarray(Es, dtype=np.float64)
    V = np.array(V0, dtype=np.float64, copy=True, order="C")
    cdef const double[::1] dv = d
    cdef const double[::1] ev = e
    cdef double[:, ::1] vv = V
    cdef Py_ssize_t n = dv.shape[0]
    cdef Py_ssize_t m = ev.shape[0]
    resid = np.empty(m, dtype=np.float64)
    cdef double[::1] rv = resid
    cp_a = np.empty(n, dtype=np.float64)
    dp_a = np.empty(n, dtype=np.float64)
    cdef double[::1] cp = cp_a
    cdef double[::1] dp = dp_a
    cdef Py_ssize_t i, j
    cdef long long it
    cdef double E, beta, pert, nrm, scale, r, amax
    amax = 0.0
    for i in range(n):
        if fabs(dv[i]) > amax:
            amax = fabs(dv[i])
    for j in range(m):
        if fabs(ev[j]) > amax:
            amax = fabs(ev[j])
    scale = amax + 2.0
    if scale < 1.0:
        scale = 1.0
    pert = 2.220446049250313e-16 * scale
    with nogil:
        for j in range(m):
            E = ev[j]
            for it in range(iters):
                nrm = 0.0
                for i in range(n):
                    nrm += vv[j, i] * vv[j, i]
                nrm = nrm ** 0.5
                if nrm == 0.0:
                    nrm = 1.0
                beta = dv[0] - E
                if fabs(beta) < pert:
                    beta = -pert if beta < 0.0 else pert
                cp[0] = 1.0 / beta
                dp[0] = (vv[j, 0] / nrm) / beta
                for i in range(1, n):
                    beta = (dv[i] - E) - cp[i - 1]
                    if fabs(beta) < pert:
                        beta = -pert if beta < 0.0 else pert
                    cp[i] = 1.0 / beta
                    dp[i] = ((vv[j, i] / nrm) - dp[i - 1]) / beta
                vv[j, n - 1] = dp[n - 1]
                for i in range(n - 2, -1, -1):
                    vv[j, i] = dp[i] - cp[i] * vv[j, i + 1]
                nrm = 0.0
                for i in range(n):
                    nrm += vv[j, i] * vv[j, i]
                nrm = nrm ** 0.5
                if nrm == 0.0:
                    nrm = 1.0
                for i in range(n):
                    vv[j, i] /= nrm
            rv[j] = 0.0
            for i in range(n):
                r = (dv[i] - E) * vv[j, i]
                if i > 0:
                    r += vv[j, i - 1]
                if i + 1 < n:
                    r += vv[j, i + 1]
                rv[j] += r * r
            rv[j] = rv[j] ** 0.5
    return V, resid
