"""Quadratic pressure: maxima of the auxiliary function and the predicted limit measure.

The auxiliary function is ``phi(t) = P(beta*t*psi) - beta*t**2/2``. Its global
maximizers ``t_j`` index the equilibrium states that maximize the quadratic
free energy, and the finite-n Gibbs measures converge to a mixture of the
conformal measures at ``beta*t_j`` with weights ``c_j`` fixed by the Laplace
order of each maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import FlatMaximumError, NumericError, ResolutionError
from .measures import MarkovMeasure, MixtureMeasure, SpectralMeasure
from .symbolic import LocallyConstantPotential
from .transfer import dgm_expectation, mean_H_uniform, pressure_grid, spectral

SCAN_POINTS = 2001
MAX_ORDER = 6
STATIONARITY_TOL = 1e-10


def phi_os(pot: LocallyConstantPotential, beta: float, t):
    """Auxiliary function; vectorized over ``t``."""
    t_arr = np.asarray(t, dtype=float)
    vals = pressure_grid(pot, beta * t_arr.ravel()).reshape(t_arr.shape) - 0.5 * beta * t_arr**2
    return float(vals) if vals.ndim == 0 else vals


def search_interval(pot: LocallyConstantPotential, beta: float) -> tuple[float, float]:
    """Interval containing every maximizer.

    A maximizer solves ``t = integral of psi under an invariant measure``, so
    it lies in ``[-A, A]``; the margin keeps it strictly inside.
    """
    A = pot.sup_norm
    delta = 1e-6 * max(1.0, A)
    return (-A - delta, A + delta)


def stationarity_residual(pot: LocallyConstantPotential, beta: float, t: float) -> float:
    """``integral of psi d(mu_{beta t}) - t``; zero exactly at critical points of phi."""
    return dgm_expectation(spectral(pot, beta * t), pot) - t


def find_maxima(
    pot: LocallyConstantPotential,
    beta: float,
    tol_value: float | None = None,
    tol_sep: float = 1e-6,
    grid: int = SCAN_POINTS,
) -> list[float]:
    lo, hi = search_interval(pot, beta)
    ts = np.linspace(lo, hi, grid)
    vals = phi_os(pot, beta, ts)
    # endpoints count too: a maximizer between the last two samples can leave the
    # endpoint highest, and the residual has a known sign there anyway
    padded = np.concatenate(([-np.inf], vals, [-np.inf]))
    interior = np.flatnonzero((padded[1:-1] >= padded[:-2]) & (padded[1:-1] >= padded[2:]))
    cache = {}

    def resid(j):
        if j not in cache:
            cache[j] = stationarity_residual(pot, beta, ts[j])
        return cache[j]

    candidates = []
    for i in interior:
        # widen past rounding-level plateaus until the residual changes sign
        j, k = max(i - 1, 0), min(i + 1, grid - 1)
        while j > 0 and resid(j) <= 0:
            j -= 1
        while k < grid - 1 and resid(k) >= 0:
            k += 1
        a, b = ts[j], ts[k]
        ga, gb = resid(j), resid(k)
        if not (ga > 0 > gb):
            raise ResolutionError(
                f"no sign change of the stationarity residual around t={ts[i]:.6g}; refine the scan grid",
                residual=min(abs(ga), abs(gb)),
            )
        t = brentq(lambda s: stationarity_residual(pot, beta, s), a, b, xtol=1e-15, rtol=8.9e-16, maxiter=200)
        res = stationarity_residual(pot, beta, t)
        if abs(res) > STATIONARITY_TOL:
            raise ResolutionError(f"stationarity residual {res:.3g} at t={t!r} above tolerance", residual=abs(res))
        # a bracket spanning several critical points can land on a minimum
        drop = max(vals[j], vals[k]) - phi_os(pot, beta, t)
        if drop > 1e-12 * max(1.0, abs(vals[i])):
            raise ResolutionError(
                f"refined point t={t!r} lies below its bracket; refine the scan grid", residual=float(drop)
            )
        candidates.append(t)
    if not candidates:
        raise ResolutionError("no interior maximum found on the scan grid")
    cvals = phi_os(pot, beta, np.array(candidates))
    best = float(cvals.max())
    if tol_value is None:
        tol_value = 1e-9 * max(1.0, abs(best))
    kept = sorted(t for t, v in zip(candidates, cvals) if v >= best - tol_value)
    out = []
    for t in kept:
        if not out or t - out[-1] >= tol_sep:
            out.append(t)
    return out


def _fd_derivative(pot, beta, t, order, h):
    # central (order+1)-point difference, error expands in even powers of h
    offsets = order / 2.0 - np.arange(order + 1)
    coeffs = np.array([(-1) ** j * math.comb(order, j) for j in range(order + 1)], dtype=float)
    steps = np.array([h, h / 2, h / 4])
    pts = t + offsets[None, :] * steps[:, None]
    vals = phi_os(pot, beta, pts)
    D = (vals @ coeffs) / steps**order
    R1 = (4 * D[1:] - D[:-1]) / 3
    return float((16 * R1[1] - R1[0]) / 15)


def phi_derivative(pot: LocallyConstantPotential, beta: float, t: float, order: int, h: float | None = None):
    """Finite-difference derivative of the auxiliary function with two Richardson levels."""
    if h is None:
        h = 1e-2 * max(1.0, pot.sup_norm)
    return _fd_derivative(pot, beta, t, order, h)


def laplace_order(
    pot: LocallyConstantPotential, beta: float, t: float, threshold: float = 1e-6
) -> tuple[int, float]:
    """Smallest even order with a negative derivative at the maximizer ``t``."""
    last = None
    for k in range(2, MAX_ORDER + 1, 2):
        d = phi_derivative(pot, beta, t, k)
        if d < -threshold:
            return k, d
        last = d
    raise FlatMaximumError(
        f"no even derivative up to order {MAX_ORDER} is below -{threshold:g} at t={t!r} (last {last!r})",
        residual=last,
    )


def mixture_weights(orders: Sequence[int], derivatives: Sequence[float], mean_H: Sequence[float]) -> list[float]:
    """Weights of the limiting mixture.

    Only maxima of the largest Laplace order ``K`` contribute, each with
    ``mean_H / |phi^(K)|**(1/K)``, normalized to sum to one.
    """
    K = max(orders)
    raw = [
        (h / abs(d) ** (1.0 / K)) if k == K else 0.0 for k, d, h in zip(orders, derivatives, mean_H)
    ]
    total = sum(raw)
    return [r / total for r in raw]


@dataclass(frozen=True, eq=False)
class QuadraticSolution:
    beta: float
    pot: LocallyConstantPotential
    t_list: list
    value: float
    k_list: list
    derivatives: list
    c_list: list
    spectra: list = field(repr=False)
    duality_gap: float | None = None

    @property
    def J(self) -> int:
        return len(self.t_list)

    @property
    def K(self) -> int:
        return max(self.k_list)

    @property
    def active(self) -> list[int]:
        return [i for i, k in enumerate(self.k_list) if k == self.K]

    @property
    def P2(self) -> float:
        return self.value


def solve_quadratic(
    pot: LocallyConstantPotential,
    beta: float,
    tol_value: float | None = None,
    tol_sep: float = 1e-6,
    threshold: float = 1e-6,
    check_duality: bool = True,
) -> QuadraticSolution:
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    t_list = find_maxima(pot, beta, tol_value=tol_value, tol_sep=tol_sep)
    spectra = [spectral(pot, beta * t) for t in t_list]
    orders, derivs = zip(*(laplace_order(pot, beta, t, threshold) for t in t_list))
    c_list = mixture_weights(orders, derivs, [mean_H_uniform(s) for s in spectra])
    value = float(phi_os(pot, beta, t_list[0]))
    gap = None
    if check_duality:
        zs = np.union1d(np.linspace(-pot.sup_norm, pot.sup_norm, 101), t_list)
        fibar = legendre_hbar_many(pot, zs) + 0.5 * beta * zs**2
        phis = phi_os(pot, beta, zs)
        gap = float(phis.max() - fibar.max())
        if abs(gap) > 1e-8 or np.any(fibar > phis + 1e-9):
            raise NumericError("Legendre duality check failed on the evaluation grid", residual=gap)
    return QuadraticSolution(
        beta=float(beta),
        pot=pot,
        t_list=list(t_list),
        value=value,
        k_list=list(orders),
        derivatives=list(derivs),
        c_list=c_list,
        spectra=spectra,
        duality_gap=gap,
    )


def limit_measure(sol: QuadraticSolution) -> MixtureMeasure:
    """Predicted weak limit: the weighted mixture of conformal measures."""
    return MixtureMeasure([(c, SpectralMeasure(s, "conformal")) for c, s in zip(sol.c_list, sol.spectra)])


def default_t_grid(pot: LocallyConstantPotential, beta: float = 1.0, points: int = 401) -> np.ndarray:
    T = max(2.0 * beta * pot.sup_norm, 30.0)
    return np.linspace(-T, T, points)


def legendre_hbar_many(pot: LocallyConstantPotential, zs, t_grid=None, tol: float = 1e-10) -> np.ndarray:
    """``inf_t {P(t psi) - t z}`` over the grid for each ``z``, refined by ternary search.

    Points with ``|z| > A`` get ``-inf``.
    """
    zs = np.atleast_1d(np.asarray(zs, dtype=float))
    if t_grid is None:
        t_grid = default_t_grid(pot)
    t_grid = np.asarray(t_grid, dtype=float)
    P = pressure_grid(pot, t_grid)
    inner = P[None, :] - t_grid[None, :] * zs[:, None]
    i = np.argmin(inner, axis=1)
    a = t_grid[np.maximum(i - 1, 0)]
    b = t_grid[np.minimum(i + 1, len(t_grid) - 1)]
    best = inner[np.arange(len(zs)), i]
    # inner function is convex in t, so ternary search on the bracketing cell is exact
    while np.max(b - a) > tol:
        m1 = a + (b - a) / 3
        m2 = b - (b - a) / 3
        f = pressure_grid(pot, np.concatenate([m1, m2]))
        f1 = f[: len(zs)] - m1 * zs
        f2 = f[len(zs) :] - m2 * zs
        left = f1 < f2
        b = np.where(left, m2, b)
        a = np.where(left, a, m1)
        best = np.minimum(best, np.minimum(f1, f2))
    mid = 0.5 * (a + b)
    best = np.minimum(best, pressure_grid(pot, mid) - mid * zs)
    A = pot.sup_norm
    return np.where(np.abs(zs) > A, -np.inf, best)


def legendre_hbar(pot: LocallyConstantPotential, z: float, t_grid=None) -> float:
    return float(legendre_hbar_many(pot, [z], t_grid)[0])


def markov_free_energy(mm: MarkovMeasure, pot: LocallyConstantPotential, beta: float) -> float:
    """Entropy rate plus ``beta/2`` times the squared integral of the potential."""
    z = mm.integral(pot)
    return mm.entropy_rate() + 0.5 * beta * z * z


def maximizing_chains(sol: QuadraticSolution) -> list[MarkovMeasure]:
    """Markov chains of the equilibrium states attaining the quadratic pressure."""
    return [MarkovMeasure.from_spectral(s) for s in sol.spectra]
