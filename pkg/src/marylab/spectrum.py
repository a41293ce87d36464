"""Finite-box operators: diagonal assembly, a Sturm-bisection eigensolver,
interval Green functions from determinant ratios, and three-term extension.

A box is the restriction of the operator to an integer interval [x1, x2]
with hard (Dirichlet) ends: a real symmetric tridiagonal matrix with unit
off-diagonals and diagonal lam*tan(pi theta_j).  Sites whose cosine
vanishes inside its error radius are refused at build time; merely huge
entries are kept -- such a site decouples its neighbors, which is exactly
the barrier mechanism the decay experiments rely on.

Eigenvalues come from bisection on Sturm counts and eigenvectors from a
few rounds of batched inverse iteration, all through the kernel backends;
eigenvalues closer than the margin are re-orthogonalized as a cluster.
Green values are ratios of leading and trailing principal minors carried
in signed-log form, so box size and energy (outside the screened margin)
never overflow doubles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import backends, cocycle, hp
from .cocycle import ModelParams
from .errors import ConvergenceFailure, NearEigenvalue, SingularSite

MAX_BOX_ALL = 20_000        # eigensolve over the full spectrum
MAX_BOX_WINDOW = 100_000    # eigensolve restricted to an energy window

_RESID_FACTOR = 1e-10       # residual gate, relative to the matrix scale
_MARGIN_FACTOR = 1e-8       # Green / cluster margin, relative to the scale
_START_SEED = 8128          # deterministic inverse-iteration start vectors
_BATCH_ENTRIES = 2_000_000  # cap on shifts*size per inverse-iteration batch


# -- domain types -----------------------------------------------------------


@dataclass(frozen=True)
class BoxOperator:
    """The operator restricted to [x1, x2], stored as its diagonal.

    The off-diagonals are implicitly all ones.  params is kept for
    provenance (extension, re-centering); synthetic boxes assembled
    straight from a diagonal leave it None.
    """

    x1: int
    x2: int
    diag: np.ndarray
    params: ModelParams | None = None

    def __post_init__(self):
        if self.x2 < self.x1:
            raise ValueError("need x2 >= x1")
        d = np.array(self.diag, dtype=np.float64)
        if d.shape != (self.x2 - self.x1 + 1,):
            raise ValueError("diagonal length must match the interval")
        if not np.all(np.isfinite(d)):
            raise ValueError("diagonal entries must be finite")
        d.flags.writeable = False
        object.__setattr__(self, "diag", d)

    @property
    def size(self) -> int:
        return self.x2 - self.x1 + 1

    @property
    def scale(self) -> float:
        """Proxy for ||H||: the largest |diagonal| plus both off-diagonals."""
        return float(np.abs(self.diag).max()) + 2.0

    def index(self, site: int) -> int:
        """Array index of a lattice site."""
        if not self.x1 <= site <= self.x2:
            raise ValueError(f"site {site} outside [{self.x1}, {self.x2}]")
        return site - self.x1

    def sub(self, x1: int, x2: int) -> "BoxOperator":
        """The restriction to a sub-interval of the box."""
        if not self.x1 <= x1 <= x2 <= self.x2:
            raise ValueError("sub-interval must sit inside the box")
        return BoxOperator(x1, x2, self.diag[x1 - self.x1:x2 - self.x1 + 1],
                           self.params)


class Eigenpair(NamedTuple):
    """One (E, vector) pair; the vector is unit and indexed over [x1, x2]."""

    E: float
    vector: np.ndarray
    residual: float


# -- construction -----------------------------------------------------------


def _potentials(params: ModelParams, x1: int, x2: int) -> np.ndarray:
    """lam*tan(pi theta_j) for j = x1..x2, evaluated at the phase precision
    and rounded to doubles; SingularSite where a cosine sits inside its
    error radius."""
    out = np.empty(x2 - x1 + 1)
    base = params.site(x1)
    bits = max(base.precision_bits, params.alpha.precision_bits)
    with hp.ctx(bits):
        lam = hp.to_mpfr(params.lam, bits)
        for j, ph, err in cocycle._site_stream(base, params.alpha,
                                               x2 - x1 + 1):
            c = hp.cospi(ph)
            if abs(c) <= math.pi * err:
                raise SingularSite(
                    f"site {x1 + j}: |cos(pi theta_j)| below the error radius")
            out[j] = float(lam * hp.sinpi(ph) / c)
    return out


def build_box(params: ModelParams, x1: int, x2: int) -> BoxOperator:
    """The box operator on [x1, x2] with Dirichlet ends."""
    if x2 < x1:
        raise ValueError("need x2 >= x1")
    return BoxOperator(x1, x2, _potentials(params, x1, x2), params)


# -- eigensolver ------------------------------------------------------------


def eigensolve(box: BoxOperator, which="all") -> list[Eigenpair]:
    """Eigenpairs of the box: all of them, or those inside (E_lo, E_hi).

    Bisection on Sturm counts gives the eigenvalues by index; vectors come
    from batched inverse iteration with deterministic start vectors, with
    extra rounds for any row missing the residual gate.  Returned pairs
    are sorted by energy, vectors have unit norm and their
    largest-magnitude entry positive.
    """
    n = box.size
    if isinstance(which, str):
        if which != "all":
            raise ValueError(f"unknown eigensolve mode {which!r}")
        if n > MAX_BOX_ALL:
            raise ValueError(
                f"box size {n} exceeds {MAX_BOX_ALL}; use a window")
        i0, i1 = 0, n - 1
    else:
        e_lo, e_hi = (float(which[0]), float(which[1]))
        if e_hi < e_lo:
            raise ValueError("window must have E_lo <= E_hi")
        if n > MAX_BOX_WINDOW:
            raise ValueError(f"box size {n} exceeds {MAX_BOX_WINDOW}")
        i0 = int(backends.sturm_count(box.diag, e_lo))
        # nextafter makes the upper endpoint inclusive
        i1 = int(backends.sturm_count(box.diag,
                                      np.nextafter(e_hi, np.inf))) - 1
        if i1 < i0:
            return []
    evals = np.asarray(backends.bisect_eigenvalues(box.diag, i0, i1))
    V, resid = _iterate_vectors(box.diag, evals, box.scale)
    V, resid = _recluster(box.diag, evals, V, resid, box.scale)
    bound = _RESID_FACTOR * box.scale
    if float(resid.max()) > bound:
        bad = int(np.sum(resid > bound))
        raise ConvergenceFailure(
            f"{bad} vectors above tolerance (worst residual "
            f"{float(resid.max()):.3e}, bound {bound:.3e})")
    rows = np.arange(V.shape[0])
    tops = np.argmax(np.abs(V), axis=1)
    V[rows[V[rows, tops] < 0]] *= -1.0
    return [Eigenpair(float(evals[i]), V[i], float(resid[i]))
            for i in range(V.shape[0])]


def _iterate_vectors(diag, evals, scale):
    """Two inverse-iteration steps per shift, batched so the solver's work
    arrays stay bounded; stragglers get fresh starts and more steps."""
    n = int(diag.size)
    m = int(evals.size)
    rng = np.random.default_rng(_START_SEED)
    batch = max(1, min(m, _BATCH_ENTRIES // max(n, 1)))
    V = np.empty((m, n))
    resid = np.empty(m)
    for s in range(0, m, batch):
        e = evals[s:s + batch]
        v0 = rng.standard_normal((e.size, n))
        vb, rb = backends.inverse_iteration(diag, e, v0, 2)
        V[s:s + e.size] = vb
        resid[s:s + e.size] = rb
    bound = _RESID_FACTOR * scale
    for iters in (4, 8):
        bad = np.flatnonzero(resid > bound)
        if bad.size == 0:
            break
        vb, rb = backends.inverse_iteration(
            diag, evals[bad], rng.standard_normal((bad.size, n)), iters)
        better = rb < resid[bad]
        V[bad[better]] = vb[better]
        resid[bad[better]] = rb[better]
    return V, resid


def _recluster(diag, evals, V, resid, scale):
    """Gram-Schmidt inside groups of nearly equal eigenvalues.

    Inverse iteration returns essentially the same vector for shifts
    closer than it can resolve; orthogonalizing each group and recomputing
    its residuals keeps near-degenerate pairs honest.
    """
    if evals.size < 2:
        return V, resid
    close = np.flatnonzero(np.diff(evals) <= _MARGIN_FACTOR * scale)
    if close.size == 0:
        return V, resid
    touched = []
    start = prev = int(close[0])
    groups = []
    for i in close[1:]:
        if i != prev + 1:
            groups.append((start, prev + 1))
            start = int(i)
        prev = int(i)
    groups.append((start, prev + 1))
    for a, b in groups:
        for i in range(a, b + 1):
            for j in range(a, i):
                V[i] -= (V[i] @ V[j]) * V[j]
            nrm = float(np.linalg.norm(V[i]))
            if nrm > 0.0:
                V[i] /= nrm
            touched.append(i)
    t = np.array(touched)
    resid[t] = _residual_rows(diag, evals[t], V[t])
    return V, resid


def _residual_rows(diag, Es, V):
    """||(H - E) v|| for each row of V."""
    r = (diag[None, :] - Es[:, None]) * V
    r[:, :-1] += V[:, 1:]
    r[:, 1:] += V[:, :-1]
    return np.linalg.norm(r, axis=1)


# -- Green functions --------------------------------------------------------


def greens_det(box: BoxOperator, E: float, x: int, y: int) -> float:
    """G(x, y) of the box at energy E, where G = (H_box - E)^{-1}.

    Assembled from the principal minors of E - H in signed-log form:

        G(x, y) = -P_[x1, min-1] * P_[max+1, x2] / P_[x1, x2]

    with min/max the ordered pair (x, y) and empty intervals contributing
    1.  The energy is screened first: a Sturm count on each side of E
    catches eigenvalues within the margin, where the ratio has no digits
    left.
    """
    i = box.index(x)
    j = box.index(y)
    if i > j:
        i, j = j, i
    _screen_energy(box, E)
    n = box.size
    s_lead, l_lead = backends.det_logs(box.diag, float(E))
    s_trail, l_trail = backends.det_logs(box.diag[::-1], float(E))
    den = int(s_lead[n])
    if den == 0:
        raise NearEigenvalue("E is an exact eigenvalue of the box")
    num = int(s_lead[i]) * int(s_trail[n - 1 - j])
    if num == 0:
        return 0.0
    return -num * den * math.exp(
        float(l_lead[i]) + float(l_trail[n - 1 - j]) - float(l_lead[n]))


def _screen_energy(box: BoxOperator, E: float) -> None:
    margin = _MARGIN_FACTOR * box.scale
    below = int(backends.sturm_count(box.diag, float(E) - margin))
    above = int(backends.sturm_count(box.diag, float(E) + margin))
    if below != above:
        raise NearEigenvalue(
            f"an eigenvalue lies within {margin:.3e} of E = {float(E)!r}")


def green_identity_check(box: BoxOperator, solution, x1: int, x2: int,
                         y: int, floor: float = 1e-30) -> float:
    """Relative residual of the boundary expansion of a solution at y.

    A solution of the full equation satisfies, over any sub-interval
    [x1, x2] of its domain,

        phi(y) = -G(x1, y) phi(x1-1) - G(x2, y) phi(x2+1)

    with G the (H_sub - E)^{-1} kernel of greens_det.  Returns
    |phi(y) - rhs| / max(|phi(y)|, floor).  `solution` is an Eigenpair of
    the box or a plain (E, values) pair covering the box interval.

    The energy must clear the sub-box margin (NearEigenvalue otherwise).
    Note that a window engulfing the peak of a localized eigenvector
    inherits its eigenvalue almost exactly, and that the deep tails of
    computed eigenvectors carry absolute -- not relative -- accuracy, so
    meaningful probes keep y near the peak and one boundary close to it.
    """
    E, phi = _as_solution(solution)
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != (box.size,):
        raise ValueError("solution values must cover the box interval")
    if not (box.x1 < x1 and x2 < box.x2 and x1 <= y <= x2):
        raise ValueError("need box.x1 < x1 <= y <= x2 < box.x2")
    sub = box.sub(x1, x2)
    g1 = greens_det(sub, E, x1, y)
    g2 = greens_det(sub, E, x2, y)
    rhs = -g1 * phi[x1 - 1 - box.x1] - g2 * phi[x2 + 1 - box.x1]
    ref = float(phi[y - box.x1])
    return abs(ref - rhs) / max(abs(ref), floor)


def _as_solution(solution):
    if isinstance(solution, Eigenpair):
        return float(solution.E), solution.vector
    E, values = solution
    return float(E), values


# -- solution extension -----------------------------------------------------


def extend_solution(params: ModelParams, phi0: float, phi_minus1: float,
                    span: tuple[int, int]) -> np.ndarray:
    """The solution through (phi(0), phi(-1)), on span = (k_lo, k_hi).

    Plain double-precision three-term recursion in both directions.  The
    anchor values are kept exactly as given (callers normalize
    |phi(0)|^2 + |phi(-1)|^2 = 2 by convention); magnitudes grow like
    e^{L|k|}, so spans much past 700/L overflow doubles -- growth studies
    at that range belong to the cocycle products.
    """
    k_lo, k_hi = int(span[0]), int(span[1])
    if k_lo > -1 or k_hi < 0:
        raise ValueError("span must contain the anchor sites -1 and 0")
    pot = _potentials(params, k_lo, k_hi)
    E = float(params.E)
    off = -k_lo
    phi = np.empty(k_hi - k_lo + 1)
    phi[off] = phi0
    phi[off - 1] = phi_minus1
    for i in range(off, off + k_hi):
        phi[i + 1] = (E - pot[i]) * phi[i] - phi[i - 1]
    for i in range(off - 1, 0, -1):
        phi[i - 1] = (E - pot[i]) * phi[i] - phi[i + 1]
    return phi
