import itertools
import math

import numpy as np
import pytest

from qpress.errors import CapacityError, NumericError, RangeError, UsageError
from qpress.measures import MarkovMeasure, variational_value
from qpress.symbolic import (
    all_words,
    cw_potential,
    from_table,
    potts_alphabet,
    potts_indicator,
    random_potential,
)
from qpress.transfer import (
    _gth_solve,
    boundary_birkhoff,
    build_transfer,
    conformal_cylinder,
    conformal_table,
    dgm_cylinder,
    dgm_expectation,
    dgm_table,
    gibbs_constant,
    mean_H_uniform,
    pressure,
    pressure_grid,
    solve_spectral,
    spectral,
)

P, M = 1, 0


def _dense_true(mat):
    return mat.dense() * math.exp(mat.shift)


# --- build_transfer ---------------------------------------------------------------


def test_zero_potential_entries_are_one(zero_pot):
    mat = build_transfer(zero_pot, 3.7)
    D = _dense_true(mat)
    assert np.all(D[D > 0] == 1.0)
    assert np.all((D > 0).sum(axis=1) == 3)


def test_cw_entries_depend_on_prepended_symbol():
    t = 0.8
    mat = build_transfer(cw_potential(), t)
    # lifted to memory 2, states are single symbols; entry exp(t*psi(a)) for prepended a
    assert mat.n_states == 2
    for u in range(2):
        for a in range(2):
            assert mat.psi[u, a] == (1.0 if a == P else -1.0)
            assert mat.weights[u, a] == pytest.approx(math.exp(t if a == P else -t), rel=1e-15)


def test_row_sums(generic_pot):
    xi = 0.9
    mat = build_transfer(generic_pot, xi)
    rows = _dense_true(mat).sum(axis=1)
    for u in range(2):
        expect = sum(math.exp(xi * generic_pot((a, u))) for a in range(2))
        assert rows[u] == pytest.approx(expect, rel=1e-14)


def test_matrix_power_reproduces_birkhoff_sums():
    pot = random_potential(2, 3, 2)
    xi, n = 0.6, 5
    D = _dense_true(build_transfer(pot, xi))
    vec = np.linalg.matrix_power(D, n) @ np.ones(4)
    for u, state in enumerate(all_words(2, 2)):
        brute = sum(
            math.exp(xi * sum(pot((y + tuple(state))[i : i + 3]) for i in range(n)))
            for y in itertools.product(range(2), repeat=n)
        )
        assert vec[u] == pytest.approx(brute, rel=1e-12)


def test_range_and_capacity_errors():
    pot = random_potential(2, 2, 0)
    with pytest.raises(RangeError):
        build_transfer(pot, float("nan"))
    with pytest.raises(RangeError):
        build_transfer(pot, 1e4 / pot.A, log_domain=False)
    with pytest.raises(CapacityError):
        build_transfer(random_potential(5, 7, 0), 1.0)


def test_log_domain_selected_automatically():
    pot = random_potential(2, 2, 0)
    assert build_transfer(pot, 1000.0 / pot.A).log_domain
    assert not build_transfer(pot, 1.0).log_domain


# --- solve_spectral -----------------------------------------------------------------


def test_zero_potential_spectrum(zero_pot):
    s = spectral(zero_pot, 1.3)
    assert s.lam == pytest.approx(3.0, rel=1e-14)
    np.testing.assert_allclose(s.H, 1.0, atol=1e-13)
    np.testing.assert_allclose(s.nu, 1 / 3, atol=1e-14)


@pytest.mark.parametrize("t", [-1.5, 0.0, 0.4, 2.0])
def test_cw_root(t):
    assert spectral(cw_potential(), t).lam == pytest.approx(2 * math.cosh(t), rel=1e-14)


@pytest.mark.parametrize("b", [0.0, 0.5, math.log(2), 3.0])
def test_potts_indicator_root(b):
    assert spectral(potts_indicator(3, 1), b).lam == pytest.approx(math.exp(b) + 2, rel=1e-14)


@pytest.mark.parametrize("seed,m,xi", [(0, 2, 0.7), (3, 3, -1.2), (5, 2, 4.0)])
def test_perron_residuals_and_normalization(seed, m, xi):
    pot = random_potential(3, m, seed)
    s = spectral(pot, xi)
    D = _dense_true(s.matrix)
    assert np.max(np.abs(D @ s.H - s.lam * s.H)) <= 1e-12 * s.lam * np.max(s.H)
    assert np.max(np.abs(s.nu @ D - s.lam * s.nu)) <= 1e-12 * s.lam * np.max(s.nu)
    assert s.nu.sum() == pytest.approx(1.0, abs=1e-14)
    assert s.H @ s.nu == pytest.approx(1.0, abs=1e-14)
    assert np.all(s.H > 0) and np.all(s.nu > 0)
    assert 0 <= s.gap < 1
    ev = np.sort(np.abs(np.linalg.eigvals(D)))[::-1]
    assert s.lam == pytest.approx(ev[0], rel=1e-13)


def test_spectral_data_is_immutable(generic_pot):
    s = spectral(generic_pot, 0.5)
    with pytest.raises(ValueError):
        s.H[0] = 2.0


def test_log_domain_agrees_with_linear():
    pot = random_potential(2, 3, 4)
    a = solve_spectral(build_transfer(pot, 0.7))
    b = solve_spectral(build_transfer(pot, 0.7, log_domain=True))
    assert a.log_lambda == pytest.approx(b.log_lambda, abs=1e-14)
    np.testing.assert_allclose(a.H, b.H, atol=1e-13)
    np.testing.assert_allclose(a.nu, b.nu, atol=1e-13)


def test_large_parameter_pressure_is_finite():
    pot = random_potential(2, 2, 0)
    s = spectral(pot, 2000.0)
    assert math.isfinite(s.log_lambda)
    assert s.log_lambda == pytest.approx(pressure_grid(pot, [2000.0])[0], abs=1e-9)


# --- pressure -------------------------------------------------------------------------


def test_pressure_examples(zero_pot):
    assert pressure(zero_pot, 2.0) == pytest.approx(math.log(3), abs=1e-14)
    assert pressure(cw_potential(), 1.0) == pytest.approx(1.1269280110429725, abs=1e-14)
    assert pressure(potts_indicator(3, 1), math.log(2)) == pytest.approx(math.log(4), abs=1e-14)


def test_pressure_grid_matches_pointwise(generic_pot):
    ts = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(pressure_grid(generic_pot, ts), [pressure(generic_pot, t) for t in ts], atol=1e-13)


def test_pressure_convex(generic_pot):
    ts = np.linspace(-4, 4, 201)
    P = pressure_grid(generic_pot, ts)
    assert np.min(P[2:] - 2 * P[1:-1] + P[:-2]) >= -1e-9


def test_pressure_domination_markov_family(generic_pot):
    rng = np.random.default_rng(2024)
    t = 0.8
    Pt = pressure(generic_pot, t)
    vals = [variational_value(MarkovMeasure.random(2, 1, rng), generic_pot, t) for _ in range(200)]
    assert max(vals) <= Pt + 1e-9
    best = MarkovMeasure.from_spectral(spectral(generic_pot, t))
    assert variational_value(best, generic_pot, t) == pytest.approx(Pt, abs=1e-8)


# --- cylinders -------------------------------------------------------------------------


def test_zero_potential_cylinders(zero_pot):
    s = spectral(zero_pot, 0.4)
    for w in [(0,), (1, 2), (2, 2, 0, 1)]:
        assert conformal_cylinder(s, w) == pytest.approx(3.0 ** -len(w), rel=1e-13)
        assert dgm_cylinder(s, w) == pytest.approx(3.0 ** -len(w), rel=1e-13)


def test_cw_cylinders():
    b = 0.9
    s = spectral(cw_potential(), b)
    p = math.exp(b) / (2 * math.cosh(b))
    assert conformal_cylinder(s, (P,)) == pytest.approx(p, rel=1e-14)
    assert dgm_cylinder(s, (P, P)) == pytest.approx(p * p, rel=1e-14)


def test_conformal_brute_force(generic_pot):
    """Conformality nu([a w]) = lambda^-1 exp(xi psi(a w)) nu([w]) recursively, with an independent eigensolver."""
    xi = 0.7
    s = spectral(generic_pot, xi)
    D = np.zeros((2, 2))
    for u in range(2):
        for a in range(2):
            D[u, (a * 2 + u) // 2] += math.exp(xi * generic_pot((a, u)))
    vals, vecs = np.linalg.eig(D.T)
    i = np.argmax(vals.real)
    lam, nu = vals[i].real, np.abs(vecs[:, i].real)
    nu /= nu.sum()

    def brute(w):
        if len(w) == 1:
            return nu[w[0]]
        return math.exp(xi * generic_pot(w[:2])) / lam * brute(w[1:])

    for w in itertools.product(range(2), repeat=5):
        assert conformal_cylinder(s, w) == pytest.approx(brute(w), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("q,b,k", [(3, 0.8, 1), (4, -0.5, 3)])
def test_dgm_potts_indicator(q, b, k):
    s = spectral(potts_indicator(q, k), b)
    for w in [(0,), (k - 1, 1), (k - 1, k - 1, 2)]:
        count = sum(1 for x in w if x == k - 1)
        expect = math.exp(b * count) / (math.exp(b) + q - 1) ** len(w)
        assert dgm_cylinder(s, w) == pytest.approx(expect, rel=1e-13)


def test_additivity_and_shift_invariance():
    pot = random_potential(2, 3, 9)
    s = spectral(pot, 1.1)
    for p in range(0, 12):
        nu_p, nu_next = conformal_table(s, p) if p else np.ones(1), conformal_table(s, p + 1)
        mu_p, mu_next = dgm_table(s, p) if p else np.ones(1), dgm_table(s, p + 1)
        # extend on the right: [w a] sums to [w]
        np.testing.assert_allclose(nu_next.reshape(-1, 2).sum(axis=1), nu_p, atol=1e-13)
        np.testing.assert_allclose(mu_next.reshape(-1, 2).sum(axis=1), mu_p, atol=1e-13)
        # extend on the left: shift invariance of the equilibrium measure
        np.testing.assert_allclose(mu_next.reshape(2, -1).sum(axis=0), mu_p, atol=1e-12)


def test_tables_match_pointwise():
    pot = random_potential(3, 2, 1)
    s = spectral(pot, -0.6)
    words = all_words(3, 4)
    np.testing.assert_allclose(conformal_table(s, 4), [conformal_cylinder(s, tuple(w)) for w in words], rtol=1e-13)
    np.testing.assert_allclose(dgm_table(s, 4), [dgm_cylinder(s, tuple(w)) for w in words], rtol=1e-13)


# --- integrals ----------------------------------------------------------------------------


def test_dgm_expectation_constant(generic_pot):
    s = spectral(generic_pot, 1.4)
    const = from_table(generic_pot.alphabet, 1, [2.5, 2.5])
    assert dgm_expectation(s, const) == pytest.approx(2.5, abs=1e-13)


def test_dgm_expectation_cw():
    b = 0.65
    s = spectral(cw_potential(), b)
    assert dgm_expectation(s, cw_potential()) == pytest.approx(math.tanh(b), abs=1e-14)


def test_dgm_expectation_is_pressure_derivative(generic_pot):
    h = 1e-4
    fd = (pressure(generic_pot, 0.5 + h) - pressure(generic_pot, 0.5 - h)) / (2 * h)
    assert dgm_expectation(spectral(generic_pot, 0.5), generic_pot) == pytest.approx(fd, abs=1e-6)


def test_dgm_expectation_alphabet_mismatch(generic_pot):
    with pytest.raises(UsageError):
        dgm_expectation(spectral(generic_pot, 0.2), potts_indicator(3, 1))


def test_mean_H_examples(zero_pot, generic_pot):
    assert mean_H_uniform(spectral(zero_pot, 1.0)) == pytest.approx(1.0, abs=1e-13)
    assert mean_H_uniform(spectral(random_potential(3, 1, 2), 1.7)) == pytest.approx(1.0, abs=1e-13)
    s = spectral(generic_pot, 1.0)
    assert mean_H_uniform(s) == pytest.approx(s.H.sum() / 2, abs=1e-15)
    assert mean_H_uniform(s) == pytest.approx(0.87553279693712, abs=1e-12)


def test_gibbs_bound_small_words(generic_pot):
    s = spectral(generic_pot, -0.8)
    C = gibbs_constant(s)
    for n in range(2, 9):
        logs = np.log(dgm_table(s, n))
        for w, lw in zip(all_words(2, n), logs):
            dev = lw - (s.xi * boundary_birkhoff(generic_pot, tuple(w)) - n * s.log_lambda)
            assert abs(dev) <= C


def test_boundary_birkhoff_counts_inner_windows():
    pot = random_potential(2, 3, 0)
    w = (0, 1, 1, 0, 1)
    assert boundary_birkhoff(pot, w) == pytest.approx(sum(pot(w[i : i + 3]) for i in range(3)))
    assert boundary_birkhoff(pot, (0, 1)) == 0.0


def test_potts_indicator_alphabet():
    assert spectral(potts_indicator(3, 2), 0.1).pot.alphabet == potts_alphabet(3)


# --- hard spectra --------------------------------------------------------------------------


def test_near_periodic_spectrum():
    pot = from_table(potts_alphabet(2), 3, [0, 1, -2, 0, 2, 0, 1, 0.0])
    for t in (-4.0, -3.0):
        lam = max(abs(np.linalg.eigvals(_dense_true(build_transfer(pot, t)))))
        assert pressure(pot, t) == pytest.approx(math.log(lam), abs=1e-12)
        assert pressure_grid(pot, [t])[0] == pytest.approx(math.log(lam), abs=1e-12)
    ts = np.linspace(-4, 0, 41)
    assert np.all(np.diff(pressure_grid(pot, ts), 2) >= -1e-9)


@pytest.mark.parametrize("t", [-30.0, -60.0, -400.0, -600.0])
def test_nearly_reducible_spectrum(t):
    # M = [[1, e^t], [1, 1]]: lambda = 1 + e^(t/2), Perron vectors (e^(t/2), 1) and (1, e^(t/2))
    pot = from_table(potts_alphabet(2), 2, [0, 0, 1, 0.0])
    exact = math.log1p(math.exp(t / 2))
    spec = spectral(pot, t)
    assert spec.log_lambda == pytest.approx(exact, rel=1e-12)
    assert pressure_grid(pot, [t])[0] == pytest.approx(exact, rel=1e-12)
    np.testing.assert_allclose(spec.H * spec.nu, [0.5, 0.5], atol=1e-12)
    assert dgm_table(spec, 2).sum() == pytest.approx(1.0, abs=1e-12)


def test_unresolvable_vectors_raise():
    pot = from_table(potts_alphabet(2), 2, [0, 0, 1, 0.0])
    with pytest.raises(NumericError, match="not resolvable"):
        spectral(pot, -1000.0)
    assert abs(pressure_grid(pot, [-1000.0])[0]) <= 1e-15


def test_gth_solve_matches_dense_solve():
    rng = np.random.default_rng(3)
    P = rng.dirichlet(np.ones(6), size=6)
    F = rng.normal(size=6)
    dx = _gth_solve(P, F)
    pi = np.linalg.lstsq(np.vstack([(np.eye(6) - P).T, np.ones(6)]), np.r_[np.zeros(6), 1.0], rcond=None)[0]
    assert dx[0] == 0.0
    np.testing.assert_allclose((np.eye(6) - P) @ dx, F - pi @ F, atol=1e-12)
