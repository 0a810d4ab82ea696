"""Ruelle transfer operator of a locally constant potential as a finite matrix.

For a potential of memory ``m`` (lifted to ``m' = max(m, 2)``) the operator
acts on functions of the first ``m'-1`` symbols. State ``u`` is such a word;
prepending symbol ``a`` gives the word ``a·u`` of length ``m'`` on which the
potential is read, and the successor state is the first ``m'-1`` symbols of
``a·u``. So ``(L f)(u) = sum_a exp(xi * psi(a·u)) f(succ(u, a))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .errors import CapacityError, NumericError, RangeError, UsageError
from .symbolic import LocallyConstantPotential, all_words, window_indices, word_index

MATRIX_CAP = 4096
# plain power steps before switching to the shifted iteration v <- Mv + c v
DAMP_AFTER = 100
# matrices this small fall back to a dense eigensolve when iteration stalls
DENSE_CAP = 512
FAST_ITER = 2000
NEWTON_STEPS = 500
DENSE_TOL = 1e-12
TINY = 1e-300


def _structure(q: int, mem: int):
    S = q ** (mem - 1)
    u = np.arange(S)
    a = np.arange(q)
    psi_idx = a[None, :] * S + u[:, None]
    succ = a[None, :] * q ** (mem - 2) + (u // q)[:, None]
    return psi_idx, succ


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    pot: LocallyConstantPotential  # lifted, memory >= 2
    xi: float
    psi: np.ndarray  # (S, q): potential on a·u
    succ: np.ndarray  # (S, q): successor state of a·u
    shift: float  # entries are stored divided by exp(shift)
    log_domain: bool
    A: float  # sup norm of the original potential

    @property
    def n_states(self) -> int:
        return self.psi.shape[0]

    @property
    def weights(self) -> np.ndarray:
        """Nonzero entries ``exp(xi*psi - shift)`` laid out like ``psi``."""
        return np.exp(self.xi * self.psi - self.shift)

    def dense(self) -> np.ndarray:
        """Dense (shifted) matrix; multiply by ``exp(shift)`` for the true operator."""
        S = self.n_states
        M = np.zeros((S, S))
        rows = np.repeat(np.arange(S), self.psi.shape[1])
        M[rows, self.succ.ravel()] = self.weights.ravel()
        return M

    def apply(self, v: np.ndarray) -> np.ndarray:
        return np.einsum("sa,sa->s", self.weights, v[self.succ])

    def apply_left(self, v: np.ndarray) -> np.ndarray:
        return np.bincount(
            self.succ.ravel(), weights=(v[:, None] * self.weights).ravel(), minlength=self.n_states
        )

    def apply_log(self, lv: np.ndarray) -> np.ndarray:
        """``log(M exp(lv))`` without leaving log domain (shift not included)."""
        return logsumexp(self.xi * self.psi - self.shift + lv[self.succ], axis=1)

    def apply_left_log(self, lv: np.ndarray) -> np.ndarray:
        # each state is the successor of exactly q (state, symbol) pairs
        terms = (lv[:, None] + self.xi * self.psi - self.shift).ravel()
        order = np.argsort(self.succ.ravel(), kind="stable")
        return logsumexp(terms[order].reshape(self.n_states, -1), axis=1)


def lifted_memory(pot: LocallyConstantPotential) -> int:
    return max(pot.memory, 2)


def build_transfer(
    pot: LocallyConstantPotential, xi: float, log_domain: bool | None = None, cap: int = MATRIX_CAP
) -> TransferMatrix:
    xi = float(xi)
    if not math.isfinite(xi):
        raise RangeError(f"xi must be finite, got {xi}")
    mem = lifted_memory(pot)
    S = pot.q ** (mem - 1)
    if S > cap:
        raise CapacityError(f"transfer matrix would have {S} states (cap {cap})")
    A = pot.sup_norm
    if log_domain is None:
        log_domain = abs(xi) * A > kernels.LOG_DOMAIN_THRESHOLD
    if not log_domain and 2.0 * abs(xi) * A > 700.0:
        raise RangeError(f"|xi|*A = {abs(xi) * A:.4g} exceeds the exponent range; use log_domain=True")
    lifted = pot.lifted(mem)
    psi_idx, succ = _structure(pot.q, mem)
    psi = lifted.table[psi_idx]
    shift = float(np.max(xi * psi)) if log_domain else 0.0
    return TransferMatrix(lifted, xi, psi, succ, shift, bool(log_domain), A)


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Perron data of the transfer operator at one parameter value.

    ``H`` is the right eigenvector, ``nu`` the left one (the conformal measure
    of the ``(m'-1)``-cylinders), normalized so that ``sum(nu) == 1`` and
    ``H @ nu == 1``.
    """

    matrix: TransferMatrix
    log_lambda: float
    H: np.ndarray
    nu: np.ndarray
    gap: float
    iterations: int
    residual: float

    @property
    def xi(self) -> float:
        return self.matrix.xi

    @property
    def lam(self) -> float:
        return math.exp(self.log_lambda)

    @property
    def pot(self) -> LocallyConstantPotential:
        return self.matrix.pot

    @property
    def q(self) -> int:
        return self.matrix.pot.q

    @property
    def mem(self) -> int:
        return self.matrix.pot.memory


def _power(op, S, tol, maxiter):
    v = np.ones(S)
    widths = []
    lo = hi = 0.0
    best = None
    for it in range(1, maxiter + 1):
        y = op(v)
        r = y / v
        lo, hi = float(r.min()), float(r.max())
        width = (hi - lo) / hi
        widths.append(width)
        if width <= tol:
            break
        # rounding floor: the bracket stopped shrinking but is already tight
        if it > 50 and width <= 1e-12 and min(widths[-50:-25]) <= width:
            break
        if it > DAMP_AFTER:
            y = y + hi * v
        v = y / y.max()
    else:
        best = widths[-1]
    lam = 0.5 * (lo + hi)
    resid = float(np.max(np.abs(op(v) - lam * v)) / (lam * np.max(np.abs(v))))
    if best is not None and resid > 1e-12:
        raise NumericError(f"power iteration did not converge in {maxiter} iterations", residual=resid)
    return lam, v, _gap(widths), len(widths), resid


def _gap(widths):
    # contraction of the plain iteration; the shifted steps say nothing about |lambda_2|
    informative = [w for w in widths[: DAMP_AFTER + 1] if w > 1e-13]
    gap = informative[-1] / informative[-2] if len(informative) >= 2 else 0.0
    return min(max(gap, 0.0), 1.0 - 1e-16)


def _power_log(op, S, tol, maxiter):
    # power iteration on log vectors; returns log of the root and the log eigenvector
    lv = np.zeros(S)
    widths = []
    lo = hi = 0.0
    for it in range(1, maxiter + 1):
        new = op(lv)
        r = new - lv
        lo, hi = float(r.min()), float(r.max())
        widths.append(hi - lo)
        if hi - lo <= tol:
            break
        if it > 50 and hi - lo <= 1e-12 and min(widths[-50:-25]) <= hi - lo:
            break
        if it > DAMP_AFTER:
            new = np.logaddexp(new, hi + lv)
        lv = new - new.max()
    else:
        if widths[-1] > 1e-12:
            raise NumericError(f"power iteration did not converge in {maxiter} iterations", residual=widths[-1])
    return 0.5 * (lo + hi), lv, _gap(widths), len(widths), widths[-1]


def _solve_log(matrix, tol, maxiter):
    S = matrix.n_states
    ll_r, lH, gap, it_r, res_r = _power_log(matrix.apply_log, S, tol, maxiter)
    ll_l, lnu, _, it_l, res_l = _power_log(matrix.apply_left_log, S, tol, maxiter)
    if abs(ll_r - ll_l) > 1e-12:
        raise NumericError(f"left/right Perron roots disagree: {ll_r!r} vs {ll_l!r}", residual=abs(ll_r - ll_l))
    lnu = lnu - logsumexp(lnu)
    lH = lH - logsumexp(lH + lnu)
    return ll_r, np.exp(lH), np.exp(lnu), gap, max(it_r, it_l), max(res_r, res_l)


def _log_dense(matrix: TransferMatrix) -> np.ndarray:
    S = matrix.n_states
    L = np.full((S, S), -np.inf)
    rows = np.repeat(np.arange(S), matrix.psi.shape[1])
    L[rows, matrix.succ.ravel()] = (matrix.xi * matrix.psi - matrix.shift).ravel()
    return L


def _gth_solve(P, F):
    """Solve ``(I - P) dx = F - pi.F`` with ``dx[0] = 0`` for row-stochastic ``P``.

    State reduction without subtractions: the diagonal of ``I - P`` is always
    taken as the off-diagonal row mass, and the centred right-hand side is
    formed from differences ``F_i - F_j``, so tiny transition probabilities
    of a nearly reducible chain keep full relative accuracy.
    """
    S = F.size
    P = P.copy()
    mass = np.empty(S)
    for k in range(S - 1, 0, -1):
        mass[k] = P[k, :k].sum()
        if not mass[k] > 0:
            raise NumericError("transfer matrix is reducible")
        P[:k, :k] += np.outer(P[:k, k] / mass[k], P[k, :k])
    pi = np.zeros(S)
    pi[0] = 1.0
    for k in range(1, S):
        pi[k] = pi[:k] @ P[:k, k] / mass[k]
    pi /= pi.sum()
    r = (F[:, None] - F[None, :]) @ pi
    for k in range(S - 1, 0, -1):
        r[:k] += P[:k, k] / mass[k] * r[k]
    dx = np.zeros(S)
    for k in range(1, S):
        dx[k] = (r[k] + P[k, :k] @ dx[:k]) / mass[k]
    return dx


def _lse_rows(T):
    # row-wise log-sum-exp split as (max, log1p(rest)) so a tiny rest survives
    k = np.argmax(T, axis=1)
    rows = np.arange(T.shape[0])
    m = T[rows, k]
    E = np.exp(T - m[:, None])
    E[rows, k] = 0.0
    return m, np.log1p(E.sum(axis=1))


def _newton_log(L, x, steps=NEWTON_STEPS):
    """Log Perron vector of ``exp(L)`` by damped Newton on ``log(Mv) - log(v) = l``.

    Returns ``(width, log_root, x, floored)`` for the tightest Collatz-Wielandt
    bracket seen; ``floored`` flags transition probabilities that underflowed
    and were clamped, in which case only the root is trustworthy.
    """
    edges = np.isfinite(L)

    def bracket(x):
        T = L + x[None, :]
        m, rest = _lse_rows(T)
        lm = m + rest
        r = (m - x) + rest
        return float(r.max() - r.min()), T, lm, r

    width, T, lm, r = bracket(x)
    floored = False
    for _ in range(steps):
        if width == 0.0:
            break
        P = np.exp(T - lm[:, None])
        tiny = edges & (P < TINY)
        if tiny.any():
            floored = True
            P[tiny] = TINY
        dx = _gth_solve(P, r)
        alpha = 1.0
        while alpha > 1e-6:
            trial = bracket(x + alpha * dx)
            if trial[0] < width:
                break
            alpha *= 0.5
        else:
            break
        x = x + alpha * dx
        x -= x.max()
        width, T, lm, r = trial
    return width, 0.5 * float(r.max() + r.min()), x, floored


def _dense_gap(L, x):
    B = np.exp(L + x[None, :] - x[:, None])
    ev = np.sort(np.abs(np.linalg.eigvals(B)))[::-1]
    return min(float(ev[1] / ev[0]), 1.0 - 1e-16) if ev.size > 1 and ev[0] > 0 else 0.0


def _dense_logroot(matrix: TransferMatrix, x0=None):
    """Certified log Perron root and the log vector that certifies it."""
    L = _log_dense(matrix)
    width, ll, x, _ = _newton_log(L, np.zeros(matrix.n_states) if x0 is None else x0)
    if width > DENSE_TOL:
        raise NumericError(f"Perron root bracket stuck at width {width:.3g}", residual=width)
    return matrix.shift + ll, x


def _solve_dense(matrix: TransferMatrix):
    L = _log_dense(matrix)
    S = matrix.n_states
    w_r, ll_r, lH, f_r = _newton_log(L, np.zeros(S))
    w_l, ll_l, lnu, f_l = _newton_log(L.T, np.zeros(S))
    if f_r or f_l:
        raise NumericError(
            f"transition weights below {TINY:g} at xi={matrix.xi!r}; the Perron vectors are not resolvable in double precision"
        )
    width = max(w_r, w_l)
    if width > DENSE_TOL:
        raise NumericError(f"Perron vector bracket stuck at width {width:.3g}", residual=width)
    if abs(ll_r - ll_l) > 1e-12:
        raise NumericError(f"left/right Perron roots disagree: {ll_r!r} vs {ll_l!r}", residual=abs(ll_r - ll_l))
    gap = _dense_gap(L, lH)
    lnu = lnu - logsumexp(lnu)
    lH = lH - logsumexp(lH + lnu)
    return ll_r, np.exp(lH), np.exp(lnu), gap, NEWTON_STEPS, width


def solve_spectral(matrix: TransferMatrix, tol: float = 1e-14, maxiter: int = 100_000) -> SpectralData:
    """Perron data by power iteration; log-domain matrices iterate on log vectors.

    Small matrices whose iteration stalls (a nearly reducible matrix has
    ``|lambda_2|`` within a hair of ``lambda``) fall back to a dense
    eigensolve checked by the same Collatz-Wielandt bracket.
    """
    small = matrix.n_states <= DENSE_CAP
    try:
        return _solve_iterative(matrix, tol, min(maxiter, FAST_ITER) if small else maxiter)
    except NumericError:
        if not small:
            raise
    log_lam, H, nu, gap, iters, resid = _solve_dense(matrix)
    H.setflags(write=False)
    nu.setflags(write=False)
    return SpectralData(matrix, matrix.shift + log_lam, H, nu, gap, iters, resid)


def _solve_iterative(matrix: TransferMatrix, tol: float, maxiter: int) -> SpectralData:
    if matrix.log_domain:
        log_lam, H, nu, gap, iters, resid = _solve_log(matrix, tol, maxiter)
        H.setflags(write=False)
        nu.setflags(write=False)
        return SpectralData(matrix, matrix.shift + log_lam, H, nu, gap, iters, resid)
    S = matrix.n_states
    lam_r, H, gap, it_r, res_r = _power(matrix.apply, S, tol, maxiter)
    lam_l, nu, _, it_l, res_l = _power(matrix.apply_left, S, tol, maxiter)
    if abs(lam_r - lam_l) > 1e-12 * lam_r:
        raise NumericError(
            f"left/right Perron roots disagree: {lam_r!r} vs {lam_l!r}", residual=abs(lam_r - lam_l) / lam_r
        )
    nu = nu / nu.sum()
    H = H / (H @ nu)
    H.setflags(write=False)
    nu.setflags(write=False)
    return SpectralData(
        matrix=matrix,
        log_lambda=matrix.shift + math.log(lam_r),
        H=H,
        nu=nu,
        gap=gap,
        iterations=max(it_r, it_l),
        residual=max(res_r, res_l),
    )


def spectral(pot: LocallyConstantPotential, xi: float, **kwargs) -> SpectralData:
    return solve_spectral(build_transfer(pot, xi, **kwargs))


def pressure(pot: LocallyConstantPotential, t: float) -> float:
    """Topological pressure of ``t * psi``, i.e. the log of the Perron root."""
    return solve_spectral(build_transfer(pot, t)).log_lambda


def pressure_grid(pot: LocallyConstantPotential, ts: Sequence[float], tol: float = 1e-15) -> np.ndarray:
    """Pressure of ``t * psi`` for many ``t`` at once through the compiled kernel."""
    mem = lifted_memory(pot)
    if pot.q ** (mem - 1) > MATRIX_CAP:
        raise CapacityError(f"transfer matrix would have {pot.q ** (mem - 1)} states (cap {MATRIX_CAP})")
    psi_idx, succ = _structure(pot.q, mem)
    psi = pot.lifted(mem).table[psi_idx]
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    small = psi.shape[0] <= DENSE_CAP
    out, _ = kernels.perron_logroot(psi, succ, ts, tol, FAST_ITER if small else 100_000)
    out = np.array(out)
    stalled = np.flatnonzero(np.isnan(out))
    if stalled.size and not small:
        raise NumericError(f"power iteration did not converge at t={ts[stalled[0]]!r} ({stalled.size} points)")
    x = None
    for i in stalled:
        # neighbouring parameters have nearly the same Perron vector
        out[i], x = _dense_logroot(build_transfer(pot, ts[i]), x)
    return out


# --- cylinder evaluation -------------------------------------------------


def _log_conformal_table(spec: SpectralData, p: int) -> np.ndarray:
    q, mem = spec.q, spec.mem
    r = mem - 1
    if p < r:
        raise ValueError("table length below the state length")
    words = all_words(q, p)
    k = p - r
    if k:
        S = spec.pot.table[window_indices(words, q, mem)].sum(axis=1)
    else:
        S = np.zeros(len(words))
    tail = np.arange(q**p) % (q**r)
    with np.errstate(divide="ignore"):
        return -k * spec.log_lambda + spec.xi * S + np.log(spec.nu[tail])


def conformal_table(spec: SpectralData, p: int) -> np.ndarray:
    """Conformal measure of every length-``p`` cylinder, in index order."""
    r = spec.mem - 1
    if p >= r:
        return np.exp(_log_conformal_table(spec, p))
    return spec.nu.reshape(spec.q**p, -1).sum(axis=1)


def dgm_table(spec: SpectralData, p: int) -> np.ndarray:
    """Equilibrium (dynamical Gibbs) measure of every length-``p`` cylinder."""
    q, r = spec.q, spec.mem - 1
    if p >= r:
        head = np.arange(q**p) // (q ** (p - r))
        return spec.H[head] * np.exp(_log_conformal_table(spec, p))
    return (spec.H * spec.nu).reshape(q**p, -1).sum(axis=1)


def conformal_cylinder(spec: SpectralData, w: Sequence[int]) -> float:
    w = tuple(w)
    q, r = spec.q, spec.mem - 1
    if len(w) < r:
        block = q ** (r - len(w))
        start = word_index(w, q) * block
        return float(spec.nu[start : start + block].sum())
    k = len(w) - r
    s = sum(spec.pot(w[i : i + spec.mem]) for i in range(k))
    tail = word_index(w[k:], q)
    return math.exp(-k * spec.log_lambda + spec.xi * s) * float(spec.nu[tail])


def dgm_cylinder(spec: SpectralData, w: Sequence[int]) -> float:
    w = tuple(w)
    q, r = spec.q, spec.mem - 1
    if len(w) < r:
        block = q ** (r - len(w))
        start = word_index(w, q) * block
        return float((spec.H * spec.nu)[start : start + block].sum())
    return float(spec.H[word_index(w[:r], q)]) * conformal_cylinder(spec, w)


def dgm_expectation(spec: SpectralData, g: LocallyConstantPotential) -> float:
    """Integral of a locally constant function against the equilibrium measure."""
    if g.alphabet.q != spec.q or g.alphabet.symbols != spec.pot.alphabet.symbols:
        raise UsageError("function and spectral data live on different alphabets")
    L = max(g.memory, spec.mem)
    return float(g.lifted(L).table @ dgm_table(spec, L))


def mean_H_uniform(spec: SpectralData) -> float:
    """Integral of the eigenfunction against the uniform Bernoulli measure."""
    return float(np.mean(spec.H))


def gibbs_constant(spec: SpectralData, A: float | None = None) -> float:
    """Explicit constant in the two-sided Gibbs bound for the equilibrium measure."""
    if A is None:
        A = spec.matrix.A
    r = spec.mem - 1
    return (
        math.log(spec.H.max() / spec.H.min())
        + math.log(spec.nu.max() / spec.nu.min())
        + 2 * r * (abs(spec.xi) * A + abs(spec.log_lambda))
    )


def boundary_birkhoff(pot: LocallyConstantPotential, w: Sequence[int]) -> float:
    """Birkhoff sum along ``w`` using only windows that fit inside the word.

    Uses the lifted memory, so ``len(w) - m' + 1`` full terms.
    """
    mem = lifted_memory(pot)
    lifted = pot.lifted(mem)
    k = len(w) - mem + 1
    if k <= 0:
        return 0.0
    words = np.asarray(w, dtype=np.int64)[None, :]
    return float(lifted.table[window_indices(words, pot.q, mem)].sum())
