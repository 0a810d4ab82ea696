"""Measures evaluated on cylinders, plus finite-order Markov chains."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import NumericError, UsageError
from .symbolic import LocallyConstantPotential, all_words, word_index
from .transfer import SpectralData, conformal_cylinder, conformal_table, dgm_cylinder, dgm_table


class CylinderMeasure:
    """Probability on the full shift, known through its values on cylinders."""

    q: int

    def __call__(self, w: Sequence[int]) -> float:
        raise NotImplementedError

    def table(self, p: int) -> np.ndarray:
        """Values on every length-``p`` cylinder, in index order."""
        return np.array([self(tuple(w)) for w in all_words(self.q, p)])


class ProductMeasure(CylinderMeasure):
    def __init__(self, weights):
        weights = np.asarray(weights, dtype=float)
        if np.any(weights < 0) or not math.isclose(weights.sum(), 1.0, abs_tol=1e-12):
            raise UsageError("product weights must be a probability vector")
        self.weights = weights
        self.q = weights.size

    def __call__(self, w):
        return float(np.prod(self.weights[list(w)])) if len(w) else 1.0

    def table(self, p):
        out = np.ones(1)
        for _ in range(p):
            out = np.outer(out, self.weights).ravel()
        return out

    def __repr__(self):
        return f"ProductMeasure({self.weights.tolist()})"


class SpectralMeasure(CylinderMeasure):
    """Conformal measure ``nu`` or equilibrium measure ``H dnu`` from Perron data."""

    def __init__(self, spec: SpectralData, kind: str = "conformal"):
        if kind not in ("conformal", "dgm"):
            raise UsageError(f"kind must be 'conformal' or 'dgm', got {kind!r}")
        self.spec = spec
        self.kind = kind
        self.q = spec.q

    def __call__(self, w):
        if not len(w):
            return 1.0
        f = conformal_cylinder if self.kind == "conformal" else dgm_cylinder
        return f(self.spec, w)

    def table(self, p):
        if p == 0:
            return np.ones(1)
        f = conformal_table if self.kind == "conformal" else dgm_table
        return f(self.spec, p)

    def __repr__(self):
        return f"SpectralMeasure(xi={self.spec.xi!r}, kind={self.kind!r})"


class MixtureMeasure(CylinderMeasure):
    def __init__(self, components):
        components = [(float(c), m) for c, m in components]
        if not components:
            raise UsageError("empty mixture")
        total = sum(c for c, _ in components)
        if any(c < 0 for c, _ in components) or not math.isclose(total, 1.0, abs_tol=1e-12):
            raise UsageError(f"mixture weights must be nonnegative and sum to 1 (got {total!r})")
        self.components = components
        self.q = components[0][1].q

    def __call__(self, w):
        return sum(c * m(w) for c, m in self.components if c)

    def table(self, p):
        return sum(c * m.table(p) for c, m in self.components if c)

    def __repr__(self):
        return f"MixtureMeasure({self.components!r})"


class MarkovMeasure(CylinderMeasure):
    """Stationary Markov chain of order ``r`` on ``q`` symbols.

    ``kernel[u, a]`` is the probability of emitting symbol ``a`` after the
    length-``r`` state ``u`` (big-endian index).
    """

    def __init__(self, q: int, order: int, kernel):
        kernel = np.asarray(kernel, dtype=float)
        if order < 1:
            raise UsageError("order must be >= 1")
        if kernel.shape != (q**order, q):
            raise UsageError(f"kernel must have shape {(q**order, q)}, got {kernel.shape}")
        if np.any(kernel < 0) or not np.allclose(kernel.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise UsageError("kernel rows must be probability vectors")
        self.q = q
        self.order = order
        self.kernel = kernel
        self.pi = self._stationary()

    def transition_matrix(self) -> np.ndarray:
        q, S = self.q, self.q**self.order
        P = np.zeros((S, S))
        u = np.arange(S)
        for a in range(q):
            P[u, (u % (S // q)) * q + a] += self.kernel[:, a]
        return P

    def _stationary(self) -> np.ndarray:
        P = self.transition_matrix()
        S = P.shape[0]
        system = np.vstack([P.T - np.eye(S), np.ones(S)])
        rhs = np.zeros(S + 1)
        rhs[-1] = 1.0
        pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
        resid = float(np.max(np.abs(pi @ P - pi)))
        if resid > 1e-12:
            raise NumericError("stationary vector not found (chain may be reducible)", residual=resid)
        return pi

    def __call__(self, w):
        w = tuple(w)
        r = self.order
        if len(w) < r:
            block = self.q ** (r - len(w))
            start = word_index(w, self.q) * block
            return float(self.pi[start : start + block].sum())
        prob = float(self.pi[word_index(w[:r], self.q)])
        for i in range(len(w) - r):
            prob *= self.kernel[word_index(w[i : i + r], self.q), w[i + r]]
        return prob

    def table(self, p):
        r, q = self.order, self.q
        if p <= r:
            return self.pi.reshape(q**p, -1).sum(axis=1)
        out = self.pi.copy()
        for length in range(r, p):
            state = np.arange(q**length) % (q**r)
            out = (out[:, None] * self.kernel[state]).ravel()
        return out

    def entropy_rate(self) -> float:
        K = self.kernel
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp = np.where(K > 0, K * np.log(K), 0.0)
        return float(-(self.pi @ plogp.sum(axis=1)))

    def integral(self, pot: LocallyConstantPotential) -> float:
        if pot.q != self.q:
            raise UsageError("alphabet size mismatch")
        if self.order < pot.memory - 1:
            raise UsageError(f"chain of order {self.order} too short for a potential of memory {pot.memory}")
        L = max(pot.memory, 1)
        return float(pot.table @ self.table(L))

    @classmethod
    def random(cls, q: int, order: int, rng: np.random.Generator, concentration: float = 1.0):
        kernel = rng.dirichlet(np.full(q, concentration), size=q**order)
        return cls(q, order, kernel)

    @classmethod
    def uniform(cls, q: int, order: int = 1):
        return cls(q, order, np.full((q**order, q), 1.0 / q))

    @classmethod
    def from_spectral(cls, spec: SpectralData) -> "MarkovMeasure":
        """Markov chain of the equilibrium measure (exact: it is Markov of order ``m'-1``)."""
        r = spec.mem - 1
        joint = dgm_table(spec, r + 1).reshape(spec.q**r, spec.q)
        return cls(spec.q, r, joint / joint.sum(axis=1, keepdims=True))


def variational_value(mm: MarkovMeasure, pot: LocallyConstantPotential, t: float) -> float:
    """Entropy plus ``t`` times the integral of the potential."""
    return mm.entropy_rate() + t * mm.integral(pot)
