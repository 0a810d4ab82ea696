import itertools
import math

import numpy as np
import pytest

from qpress import kernels
from qpress.symbolic import random_potential
from qpress.transfer import _structure

BACKENDS = [kernels.python_backend]
if kernels.compiled_backend is not None:
    BACKENDS.append(kernels.compiled_backend)
IDS = [b.__name__.rsplit(".", 1)[-1] for b in BACKENDS]


def _psi(q, m, seed):
    pot = random_potential(q, m, seed)
    idx, succ = _structure(q, m)
    return pot, pot.table[idx], succ


def _dense(psi, succ, xi):
    S = psi.shape[0]
    M = np.zeros((S, S))
    for u in range(S):
        for a in range(psi.shape[1]):
            M[u, succ[u, a]] += math.exp(xi * psi[u, a])
    return M


@pytest.mark.parametrize("be", BACKENDS, ids=IDS)
def test_perron_logroot_matches_eigvals(be):
    _, psi, succ = _psi(3, 3, 5)
    xis = np.array([-2.0, 0.0, 0.3, 1.7])
    out, iters = be.perron_logroot(psi, succ, xis, 1e-15, 100_000)
    for xi, lp in zip(xis, out):
        lam = max(abs(np.linalg.eigvals(_dense(psi, succ, xi))))
        assert lp == pytest.approx(math.log(lam), abs=1e-13)
    assert np.all(np.asarray(iters) >= 1)


@pytest.mark.parametrize("be", BACKENDS, ids=IDS)
def test_perron_logroot_large_parameter(be):
    _, psi, succ = _psi(2, 2, 0)
    out, _ = be.perron_logroot(psi, succ, np.array([2000.0]), 1e-15, 100_000)
    # for huge xi the root is dominated by the best cycle mean
    assert np.isfinite(out).all()
    assert out[0] / 2000.0 <= np.abs(psi).max() + 1e-12


@pytest.mark.parametrize("be", BACKENDS, ids=IDS)
def test_log_iterate_matches_matrix_power(be):
    _, psi, succ = _psi(2, 3, 1)
    xis = np.array([-0.8, 0.5])
    g = np.array([0.1, -0.3, 0.7, 0.0])
    out = be.log_iterate(psi, succ, xis, np.broadcast_to(g, (2, 4)).copy(), 7)
    for k, xi in enumerate(xis):
        ref = np.linalg.matrix_power(_dense(psi, succ, xi), 7) @ np.exp(g)
        np.testing.assert_allclose(out[k], np.log(ref), rtol=0, atol=1e-12)


@pytest.mark.parametrize("be", BACKENDS, ids=IDS)
def test_log_iterate_log_domain_branch(be):
    _, psi, succ = _psi(2, 2, 3)
    xi = 400.0 / np.abs(psi).max()
    g = np.zeros(2)
    out = be.log_iterate(psi, succ, np.array([xi]), g[None, :], 3)
    # brute force in log space over all prepended words
    ref = np.full(2, -np.inf)
    for u in range(2):
        for word in itertools.product(range(2), repeat=3):
            s, state = 0.0, u
            for a in reversed(word):
                s += xi * psi[state, a]
                state = succ[state, a]
            ref[u] = np.logaddexp(ref[u], s)
    np.testing.assert_allclose(out[0], ref, rtol=1e-14)


@pytest.mark.parametrize("be", BACKENDS, ids=IDS)
@pytest.mark.parametrize("q,m,n,p", [(2, 1, 9, 2), (2, 2, 8, 3), (3, 2, 5, 1), (2, 3, 6, 0)])
def test_prefix_logsumexp_brute_force(be, q, m, n, p):
    pot = random_potential(q, m, 11)
    L = n + m - 1
    coef = 0.37
    ref = np.zeros(q**p)
    for x in itertools.product(range(q), repeat=L):
        S = sum(pot(x[i : i + m]) for i in range(n))
        h = 0
        for s in x[:p]:
            h = h * q + s
        ref[h] += math.exp(coef * S * S)
    shift = coef * (n * pot.sup_norm) ** 2
    out = be.prefix_logsumexp(pot.table, q, m, L, n, p, coef, shift)
    np.testing.assert_allclose(out, np.log(ref), rtol=1e-13)


def test_backends_agree():
    if kernels.compiled_backend is None:
        pytest.skip("compiled extension not built")
    py, cy = kernels.python_backend, kernels.compiled_backend
    pot, psi, succ = _psi(2, 2, 0)
    xis = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(py.perron_logroot(psi, succ, xis)[0], cy.perron_logroot(psi, succ, xis)[0], atol=1e-14)
    g = np.zeros((7, 2))
    np.testing.assert_allclose(py.log_iterate(psi, succ, xis, g, 40), cy.log_iterate(psi, succ, xis, g, 40), rtol=1e-13)
    args = (pot.table, 2, 2, 15, 14, 2, 0.1, 1.0)
    np.testing.assert_allclose(py.prefix_logsumexp(*args), cy.prefix_logsumexp(*args), rtol=1e-14)


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("be", BACKENDS, ids=IDS)
def test_perron_logroot_near_periodic(be):
    # eigenvalues +-54.598: plain power iteration barely contracts
    pot_table = np.array([0, 1, -2, 0, 2, 0, 1, 0.0])
    idx, succ = _structure(2, 3)
    psi = pot_table[idx]
    xis = np.array([-4.0, -3.0])
    out, iters = be.perron_logroot(psi, succ, xis, 1e-15, 100_000)
    for xi, lp in zip(xis, out):
        lam = max(abs(np.linalg.eigvals(_dense(psi, succ, xi))))
        assert lp == pytest.approx(math.log(lam), abs=1e-12)
    assert np.all(np.asarray(iters) < 1000)


@pytest.mark.parametrize("be", BACKENDS, ids=IDS)
def test_perron_logroot_flags_stalls(be):
    # nearly reducible: |lambda_2| / lambda = 1 - 6e-7
    idx, succ = _structure(2, 2)
    psi = np.array([0, 0, 1, 0.0])[idx]
    out, _ = be.perron_logroot(psi, succ, np.array([-30.0, 1.0]), 1e-15, 500)
    assert math.isnan(out[0]) and math.isfinite(out[1])
    out, _ = be.perron_logroot(psi, succ, np.array([-1000.0]), 1e-15, 500)
    assert math.isnan(out[0])
