"""Finite-n probabilistic Gibbs measures evaluated on cylinders.

The measure reweights the uniform product measure by ``exp((beta/2n) S_n^2)``.
Four deterministic evaluators are provided: exhaustive enumeration, the
binomial and multinomial collapses for the Curie-Weiss and Potts models, and
a Gaussian-linearized quadrature that reduces each node to powers of the
transfer matrix. Everything is computed in log domain.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from . import kernels
from .errors import CapacityError, NumericError, UsageError
from .symbolic import (
    CW_ALPHABET,
    LocallyConstantPotential,
    all_words,
    cw_potential,
    potts_alphabet,
    window_indices,
    word_index,
)
from .transfer import MATRIX_CAP, _structure, lifted_memory

EXACT_CAP = 2**26
COMPOSITION_CAP = 10**8
QUADRATURE_NODES = 128
QUADRATURE_TOL = 1e-10
MAX_PANELS = 512
TAIL_EXPONENT = 50.0
METHODS = ("exact", "cw_collapse", "cwp_collapse", "quadrature")
CSV_HEADER = ("n", "cylinder", "oracle", "predicted", "gap", "method")


def _check_query(beta, n, w):
    if not beta > 0:
        raise UsageError(f"beta must be positive, got {beta}")
    if n < 1:
        raise UsageError(f"n must be >= 1, got {n}")
    if len(w) > n:
        raise UsageError(f"cylinder length {len(w)} exceeds n={n}")


# --- exhaustive enumeration -------------------------------------------------


def birkhoff_extremes(pot: LocallyConstantPotential, n: int) -> tuple[float, float]:
    """Min and max of ``S_n`` over all words, by a max-plus recursion on (m-1)-blocks."""
    q, m = pot.q, pot.memory
    if m == 1:
        return n * float(pot.table.min()), n * float(pot.table.max())
    hi = np.zeros(q ** (m - 1))
    lo = np.zeros(q ** (m - 1))
    for _ in range(n):
        # window index u*q + a; the next block is its last m-1 symbols
        hi = (np.repeat(hi, q) + pot.table).reshape(q, -1).max(axis=0)
        lo = (np.repeat(lo, q) + pot.table).reshape(q, -1).min(axis=0)
    return float(lo.min()), float(hi.max())


def _exact_logs(pot, beta, n, p, cap):
    L = n + pot.memory - 1
    if L * math.log(pot.q) > math.log(cap) + 1e-9:
        raise CapacityError(
            f"exact enumeration needs {pot.q}^{L} words (cap {cap}); use the collapse or quadrature method"
        )
    coef = beta / (2.0 * n)
    lo, hi = birkhoff_extremes(pot, n)
    shift = coef * max(lo * lo, hi * hi)
    return np.asarray(kernels.prefix_logsumexp(pot.table, pot.q, pot.memory, L, n, p, coef, shift))


def pgm_exact_table(pot: LocallyConstantPotential, beta: float, n: int, p: int, cap: int = EXACT_CAP) -> np.ndarray:
    """Probabilities of every length-``p`` cylinder by summing over all words."""
    _check_query(beta, n, (0,) * p)
    logs = _exact_logs(pot, beta, n, p, cap)
    return np.exp(logs - logsumexp(logs))


def pgm_exact(pot: LocallyConstantPotential, beta: float, n: int, w: Sequence[int], cap: int = EXACT_CAP) -> float:
    w = pot.alphabet.check(w)
    _check_query(beta, n, w)
    logs = _exact_logs(pot, beta, n, len(w), cap)
    return float(np.exp(logs[word_index(w, pot.q)] - logsumexp(logs)))


# --- Curie-Weiss binomial collapse -----------------------------------------


def _log_binom(r):
    """``log C(r, k)`` for ``k = 0..r``; exact integers while they fit in a double."""
    if r <= 1000:
        return np.log([float(math.comb(r, k)) for k in range(r + 1)])
    k = np.arange(r + 1, dtype=float)
    return gammaln(r + 1.0) - gammaln(k + 1.0) - gammaln(r - k + 1.0)


def _cw_log_numerator(beta, n, s_p, p):
    # S_n = s_p + 2k - (n - p) where k counts the +1 among the free symbols
    r = n - p
    k = np.arange(r + 1, dtype=float)
    S = s_p + 2.0 * k - r
    terms = _log_binom(r) + (beta / (2.0 * n)) * S * S
    return float(logsumexp(terms))


def pgm_cw_collapse(beta: float, n: int, w: Sequence[int]) -> float:
    """Curie-Weiss measure of ``w`` (indices in the ``-1/+1`` alphabet) from the magnetization count."""
    w = CW_ALPHABET.check(w)
    _check_query(beta, n, w)
    if not w:
        return 1.0
    # |S_p| makes the spin flip an exact identity; the total splits into the two one-symbol cylinders
    s_p = abs(sum(2 * a - 1 for a in w))
    log_num = _cw_log_numerator(beta, n, s_p, len(w))
    log_half = _cw_log_numerator(beta, n, 1, 1)
    return math.exp(log_num - log_half) / 2.0


# --- Potts multinomial collapse ---------------------------------------------


def _log_conv(a, b, size):
    out = np.empty(size)
    for k in range(size):
        out[k] = logsumexp(a[: k + 1] + b[k::-1])
    return out


def _cwp_log_numerator(q, beta, n, counts):
    # sum over count vectors c of the free symbols of M!/prod(c_i!) exp(beta/2n |c + counts|^2);
    # the exponent separates by symbol, so this is a convolution of per-symbol series
    M = n - int(sum(counts))
    c = np.arange(M + 1, dtype=float)
    series = [(beta / (2.0 * n)) * (c + k) ** 2 - gammaln(c + 1.0) for k in counts]
    acc = series[0]
    for s in series[1:-1]:
        acc = _log_conv(acc, s, M + 1)
    last = series[-1]
    return float(gammaln(M + 1.0) + logsumexp(acc + last[::-1]))


def cwp_compositions(q: int, n: int, p: int) -> int:
    return math.comb(n - p + q - 1, q - 1)


def pgm_cwp_collapse(q: int, beta: float, n: int, w: Sequence[int]) -> float:
    """Curie-Weiss-Potts measure of ``w`` (0-based symbols) from the symbol counts."""
    if not 2 <= q <= 5:
        raise UsageError(f"the multinomial collapse supports 2 <= q <= 5, got {q}")
    w = potts_alphabet(q).check(w)
    _check_query(beta, n, w)
    if cwp_compositions(q, n, len(w)) > COMPOSITION_CAP:
        raise CapacityError(
            f"{cwp_compositions(q, n, len(w))} count vectors exceed the cap {COMPOSITION_CAP}; use a smaller n"
        )
    if not w:
        return 1.0
    # sorted counts make symbol permutations exact identities
    counts = sorted(np.bincount(w, minlength=q).tolist(), reverse=True)
    log_num = _cwp_log_numerator(q, beta, n, counts)
    log_one = _cwp_log_numerator(q, beta, n, [1] + [0] * (q - 1))
    return math.exp(log_num - log_one) / q


# --- quadrature ----------------------------------------------------------------


def truncation_radius(pot: LocallyConstantPotential, beta: float, n: int | None = None) -> float:
    """Positive root of ``(beta/4) Z^2 - beta A Z - log q = 0``.

    Past this root the integrand is below ``exp(-n beta z^2 / 4)``. With ``n``
    given the radius also grows until that bound is ``exp(-TAIL_EXPONENT)``,
    which matters only for small ``n``.
    """
    A = pot.sup_norm
    Z = (beta * A + math.sqrt(beta * beta * A * A + beta * math.log(pot.q))) / (beta / 2.0)
    if n is not None:
        Z = max(Z, math.sqrt(4.0 * TAIL_EXPONENT / (n * beta)))
    return Z


def _cylinder_glog(pot, w, mem):
    # S_p(w.u) for every state u; the parameter multiplies it later
    r = mem - 1
    states = all_words(pot.q, r)
    words = np.hstack([np.broadcast_to(np.asarray(w, dtype=np.int64), (len(states), len(w))), states])
    return pot.lifted(mem).table[window_indices(words, pot.q, mem)].sum(axis=1)


def _log_integrand(psi, succ, zs, beta, n, p, base):
    # log of exp(-n beta z^2/2) * sum_u (M_{beta z}^{n-p} g)(u), g = exp(beta z * base)
    xis = beta * zs
    glog = xis[:, None] * base[None, :]
    logs = np.asarray(kernels.log_iterate(psi, succ, xis, glog, n - p))
    return -0.5 * n * beta * zs**2 + logsumexp(logs, axis=1)


def _gauss_nodes(Z, panels):
    x, wts = np.polynomial.legendre.leggauss(QUADRATURE_NODES)
    edges = np.linspace(-Z, Z, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * wts[None, :]).ravel()
    return nodes, np.log(weights)


def pgm_quadrature_many(
    pot: LocallyConstantPotential, beta: float, n: int, words: Sequence[Sequence[int]], tol: float = QUADRATURE_TOL
) -> np.ndarray:
    """Quadrature values for several cylinders sharing the same normalizer."""
    words = [pot.alphabet.check(w) for w in words]
    for w in words:
        _check_query(beta, n, w)
    mem = lifted_memory(pot)
    if pot.q ** (mem - 1) > MATRIX_CAP:
        raise CapacityError(f"transfer matrix would have {pot.q ** (mem - 1)} states (cap {MATRIX_CAP})")
    psi_idx, succ = _structure(pot.q, mem)
    psi = pot.lifted(mem).table[psi_idx]
    bases = [_cylinder_glog(pot, w, mem) if w else np.zeros(psi.shape[0]) for w in words]
    Z = truncation_radius(pot, beta, n)
    prev = None
    panels = 1
    while True:
        zs, logw = _gauss_nodes(Z, panels)
        log_D = logsumexp(logw + _log_integrand(psi, succ, zs, beta, n, 0, np.zeros(psi.shape[0])))
        vals = np.array(
            [
                math.exp(logsumexp(logw + _log_integrand(psi, succ, zs, beta, n, len(w), b)) - log_D)
                for w, b in zip(words, bases)
            ]
        )
        if prev is not None:
            change = float(np.max(np.abs(vals - prev)))
            if change <= tol:
                return vals
        if panels >= MAX_PANELS:
            raise NumericError(
                f"quadrature not converged with {panels} panels of {QUADRATURE_NODES} nodes",
                residual=change if prev is not None else float("nan"),
            )
        prev = vals
        panels *= 2


def pgm_quadrature(pot: LocallyConstantPotential, beta: float, n: int, w: Sequence[int], tol: float = QUADRATURE_TOL):
    return float(pgm_quadrature_many(pot, beta, n, [w], tol)[0])


# --- dispatch ------------------------------------------------------------------


@dataclass(frozen=True)
class PgmQuery:
    pot: LocallyConstantPotential | None
    beta: float
    n: int
    cylinder: tuple
    method: str = "exact"
    q: int | None = None  # Potts model size, only for cwp_collapse

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method == "cwp_collapse":
            if self.q is None:
                raise UsageError("cwp_collapse needs q")
        elif self.pot is None:
            raise UsageError(f"method {self.method} needs a potential")
        _check_query(self.beta, self.n, self.cylinder)


def evaluate(query: PgmQuery) -> float:
    m, w = query.method, query.cylinder
    if m == "exact":
        return pgm_exact(query.pot, query.beta, query.n, w)
    if m == "cw_collapse":
        if query.pot is not None and not is_cw(query.pot):
            raise UsageError("cw_collapse applies to the Curie-Weiss potential only")
        return pgm_cw_collapse(query.beta, query.n, w)
    if m == "cwp_collapse":
        return pgm_cwp_collapse(query.q, query.beta, query.n, w)
    return pgm_quadrature(query.pot, query.beta, query.n, w)


def is_cw(pot: LocallyConstantPotential) -> bool:
    return pot.memory == 1 and pot == cw_potential()


def choose_method(pot: LocallyConstantPotential, n: int) -> str:
    """Cheapest exact method for the potential at this n."""
    if is_cw(pot):
        return "cw_collapse"
    if (n + pot.memory - 1) * math.log(pot.q) <= math.log(EXACT_CAP) + 1e-9:
        return "exact"
    return "quadrature"


# --- convergence reports ------------------------------------------------------


def _fmt(x) -> str:
    return repr(int(x)) if isinstance(x, (int, np.integer)) else format(float(x), ".17g")


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)

    def gaps(self, cylinder: str) -> list[float]:
        return [r["gap"] for r in self.rows if r["cylinder"] == cylinder]

    @property
    def near_monotone(self) -> bool:
        """Gaps never grow by more than 20% from one n to the next."""
        for cyl in dict.fromkeys(r["cylinder"] for r in self.rows):
            g = self.gaps(cyl)
            if any(b > 1.2 * a for a, b in zip(g, g[1:])):
                return False
        return True

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([_fmt(r["n"]), r["cylinder"]] + [_fmt(r[k]) for k in ("oracle", "predicted", "gap")] + [r["method"]])
        return buf.getvalue()


def convergence_report(
    pot: LocallyConstantPotential,
    beta: float,
    cylinders: Sequence[Sequence[int]],
    n_schedule: Sequence[int],
    method: str | None = None,
) -> ConvergenceReport:
    """Oracle values against the predicted limit for every (n, cylinder) pair."""
    from .quadratic import limit_measure, solve_quadratic

    cylinders = [pot.alphabet.check(w) for w in cylinders]
    limit = limit_measure(solve_quadratic(pot, beta))
    predicted = [limit(w) for w in cylinders]
    report = ConvergenceReport()
    for n in n_schedule:
        meth = method or choose_method(pot, n)
        if meth == "quadrature":
            vals = pgm_quadrature_many(pot, beta, n, cylinders)
        else:
            vals = [evaluate(PgmQuery(pot, beta, n, w, meth)) for w in cylinders]
        for w, v, pred in zip(cylinders, vals, predicted):
            report.rows.append(
                dict(n=int(n), cylinder=pot.alphabet.render(w), oracle=float(v), predicted=pred, gap=abs(v - pred), method=meth)
            )
    return report


def cwp_convergence_report(q: int, beta: float, cylinders, n_schedule, at_critical: bool = False) -> ConvergenceReport:
    from .models import cwp_beta_c, cwp_limit_cylinder

    if at_critical:
        beta = cwp_beta_c(q)
    alphabet = potts_alphabet(q)
    cylinders = [alphabet.check(w) for w in cylinders]
    report = ConvergenceReport()
    for n in n_schedule:
        for w in cylinders:
            v = pgm_cwp_collapse(q, beta, n, w)
            pred = cwp_limit_cylinder(q, beta, w)
            report.rows.append(
                dict(n=int(n), cylinder=alphabet.render(w), oracle=v, predicted=pred, gap=abs(v - pred), method="cwp_collapse")
            )
    return report
