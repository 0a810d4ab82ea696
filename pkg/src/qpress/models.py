"""Closed-form Curie-Weiss and Curie-Weiss-Potts limits.

These are analytic oracles for the generic machinery in ``quadratic``: the
Curie-Weiss limit is a half-half mixture of two Bernoulli measures, and the
Potts limit is a symmetric mixture of the ``q`` single-symbol-biased product
measures, with an extra uniform component exactly at the critical point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UsageError
from .measures import MixtureMeasure, ProductMeasure

BISECTION_STEPS = 200
CRITICAL_TOL = 1e-12


def _bisect(f, lo, hi, steps=BISECTION_STEPS):
    """Bisection for a sign change of ``f`` on ``[lo, hi]``."""
    flo = f(lo)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- Curie-Weiss ------------------------------------------------------------


@dataclass(frozen=True)
class CwSolution:
    beta: float
    xi: float
    p_plus: float
    limit: MixtureMeasure


def cw_magnetization(beta: float) -> float:
    """Largest root in [0, 1] of ``x = tanh(beta x)``; zero for ``beta <= 1``."""
    if beta <= 1.0:
        return 0.0
    return _bisect(lambda x: x - math.tanh(beta * x), 1e-300, 1.0)


def cw_solution(beta: float) -> CwSolution:
    if not beta > 0:
        raise UsageError("beta must be positive")
    xi = cw_magnetization(beta)
    # symbol order is (-1, +1)
    p_plus = 0.5 * (1.0 + xi)
    if xi == 0.0:
        limit = MixtureMeasure([(1.0, ProductMeasure([0.5, 0.5]))])
    else:
        limit = MixtureMeasure(
            [(0.5, ProductMeasure([1.0 - p_plus, p_plus])), (0.5, ProductMeasure([p_plus, 1.0 - p_plus]))]
        )
    return CwSolution(beta=float(beta), xi=xi, p_plus=p_plus, limit=limit)


def cw_pressure_closed(beta: float) -> float:
    """Pressure of ``beta * (1_[+1] - 1_[-1])``: log 2 + log cosh beta."""
    b = abs(beta)
    # log cosh b = b + log1p(exp(-2b)) - log 2, stable for large b
    return b + math.log1p(math.exp(-2.0 * b))


def cw_phi(beta: float, x):
    """Auxiliary function ``log cosh(beta x) - beta x^2 / 2`` (without the log 2)."""
    x = np.asarray(x, dtype=float)
    bx = np.abs(beta * x)
    return bx + np.log1p(np.exp(-2 * bx)) - math.log(2) - 0.5 * beta * x * x


# --- Curie-Weiss-Potts ------------------------------------------------------


def cwp_beta_c(q: int) -> float:
    if q < 3:
        raise UsageError("the Potts critical point needs q >= 3 (q = 2 is the Curie-Weiss model)")
    return 2.0 * (q - 1) * math.log(q - 1) / (q - 2)


def cwp_regime(q: int, beta: float) -> str:
    """'sub', 'super' or 'critical' (within a relative 1e-12 of the critical point)."""
    bc = cwp_beta_c(q)
    if abs(beta - bc) <= CRITICAL_TOL * max(1.0, bc):
        return "critical"
    return "sub" if beta < bc else "super"


def cwp_s_residual(q: int, beta: float, s: float) -> float:
    e = math.exp(beta * s)
    return s - (e - 1.0) / (e + q - 1.0)


def cwp_s(q: int, beta: float) -> float:
    """Order parameter: 0 below the critical point, else the largest root of the fixed-point equation."""
    regime = cwp_regime(q, beta)
    if regime == "sub":
        return 0.0
    if regime == "critical":
        beta = cwp_beta_c(q)
    lo = (q - 2) / (q - 1) - 1e-9
    return _bisect(lambda s: cwp_s_residual(q, beta, s), lo, 1.0)


def cwp_dgm_cylinder(q: int, b: float, k: int, w: Sequence[int]) -> float:
    """Product measure favouring symbol ``k`` (1-based) evaluated on the cylinder ``w`` (0-based indices)."""
    if not 1 <= k <= q:
        raise UsageError(f"need 1 <= k <= q, got k={k}")
    count = sum(1 for s in w if s == k - 1)
    return math.exp(b * count - len(w) * math.log(math.exp(b) + q - 1))


def potts_product(q: int, b: float, k: int) -> ProductMeasure:
    weights = np.full(q, 1.0)
    weights[k - 1] = math.exp(b)
    return ProductMeasure(weights / weights.sum())


@dataclass(frozen=True)
class CwpSolution:
    q: int
    beta: float
    beta_c: float
    s: float
    regime: str
    A_w: float | None
    B_w: float | None
    limit: MixtureMeasure


def cwp_critical_weights(q: int) -> tuple[float, float]:
    bc = cwp_beta_c(q)
    A = (1.0 - bc / (q * (q - 1))) ** ((q - 2) / 2)
    B = (1.0 - bc / q) ** ((q - 2) / 2)
    return A, B


def cwp_solution(q: int, beta: float, at_critical: bool = False) -> CwpSolution:
    bc = cwp_beta_c(q)
    if at_critical:
        beta = bc
    regime = cwp_regime(q, beta)
    s = cwp_s(q, beta)
    uniform = ProductMeasure(np.full(q, 1.0 / q))
    A_w = B_w = None
    if regime == "sub":
        limit = MixtureMeasure([(1.0, uniform)])
    else:
        b = (bc if regime == "critical" else beta) * s
        comps = [potts_product(q, b, k) for k in range(1, q + 1)]
        if regime == "super":
            limit = MixtureMeasure([(1.0 / q, m) for m in comps])
        else:
            A_w, B_w = cwp_critical_weights(q)
            Z = A_w + q * B_w
            limit = MixtureMeasure([(A_w / Z, uniform)] + [(B_w / Z, m) for m in comps])
    return CwpSolution(q=q, beta=float(beta), beta_c=bc, s=s, regime=regime, A_w=A_w, B_w=B_w, limit=limit)


def cwp_limit_cylinder(q: int, beta: float, w: Sequence[int], regime: str | None = None) -> float:
    """Limit of the Potts finite-n measure on the cylinder ``w``.

    ``regime`` forces a branch formula (``'sub'``, ``'super'`` or ``'critical'``);
    by default it is chosen by comparing ``beta`` with the critical point.
    """
    p = len(w)
    if regime is None:
        regime = cwp_regime(q, beta)
    if regime == "sub":
        return q ** (-p)
    bc = cwp_beta_c(q)
    if regime == "critical":
        beta = bc
    if cwp_regime(q, beta) == "sub":
        raise UsageError(f"the {regime} formula needs beta >= beta_c = {bc!r}")
    s = cwp_s(q, beta)
    bs = beta * s
    counts = np.bincount(np.asarray(w, dtype=np.int64), minlength=q) if p else np.zeros(q)
    log_norm = p * math.log(math.exp(bs) + q - 1)
    biased = float(np.sum(np.exp(bs * counts - log_norm)))
    if regime == "super":
        return biased / q
    if regime == "critical":
        A_w, B_w = cwp_critical_weights(q)
        return (A_w * q ** (-p) + B_w * biased) / (A_w + q * B_w)
    raise UsageError(f"unknown regime {regime!r}")


def phi_potts(q: int, beta: float, z) -> float:
    z = np.asarray(z, dtype=float)
    bz = beta * z
    m = bz.max()
    return float(-0.5 * beta * z @ z + m + math.log(np.exp(bz - m).sum()))


def phi_potts_gradient(q: int, beta: float, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(beta * z - np.max(beta * z))
    return beta * e / e.sum() - beta * z


def phi_potts_hessian(q: int, beta: float, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(beta * z - np.max(beta * z))
    p = e / e.sum()
    return beta**2 * (np.diag(p) - np.outer(p, p)) - beta * np.eye(len(z))


def potts_point(q: int, s: float, first: int = 0) -> np.ndarray:
    """``((1+(q-1)s)/q, (1-s)/q, ...)`` with the large coordinate moved to ``first``."""
    z = np.full(q, (1.0 - s) / q)
    z[first] = (1.0 + (q - 1) * s) / q
    return z


def cwp_critical_points(q: int, beta: float) -> list[np.ndarray]:
    """Global maximizers of the Potts auxiliary function (three regimes)."""
    regime = cwp_regime(q, beta)
    nu0 = np.full(q, 1.0 / q)
    if regime == "sub":
        return [nu0]
    s = cwp_s(q, beta)
    sym = [potts_point(q, s, i) for i in range(q)]
    return sym if regime == "super" else [nu0] + sym


def cwp_hessian_eigs(q: int, beta: float, which: str) -> list[float]:
    """Closed-form magnitudes of the Hessian eigenvalues at ``nu0`` or ``nu1``, with multiplicity."""
    if which == "nu0":
        return [beta] + [beta * (q - beta) / q] * (q - 1)
    if which == "nu1":
        if cwp_regime(q, beta) == "sub":
            raise UsageError("nu1 exists only for beta >= beta_c")
        s = cwp_s(q, beta)
        a = (1.0 + (q - 1) * s) / q
        b = (1.0 - s) / q
        return [beta, beta - beta**2 * q * a * b] + [beta - beta**2 * b] * (q - 2)
    raise UsageError(f"which must be 'nu0' or 'nu1', got {which!r}")
