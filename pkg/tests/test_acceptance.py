"""End-to-end acceptance checks, one test per criterion.

Each test tags itself with ``criterion`` so the terminal summary prints a
PASS/FAIL line per criterion.
"""

import itertools
import math
import time

import numpy as np
import pytest

from qpress.measures import MarkovMeasure
from qpress.models import (
    cw_solution,
    cwp_beta_c,
    cwp_hessian_eigs,
    cwp_limit_cylinder,
    cwp_s,
)
from qpress.oracle import (
    pgm_cw_collapse,
    pgm_cwp_collapse,
    pgm_exact,
    pgm_exact_table,
    pgm_quadrature_many,
)
from qpress.quadratic import (
    laplace_order,
    legendre_hbar_many,
    limit_measure,
    markov_free_energy,
    maximizing_chains,
    phi_os,
    solve_quadratic,
    stationarity_residual,
)
from qpress.symbolic import all_words, cw_potential, random_potential
from qpress.transfer import boundary_birkhoff, dgm_table, gibbs_constant, spectral

pytestmark = pytest.mark.acceptance

P, M = 1, 0
LOG2 = math.log(2)


@pytest.fixture
def criterion(record_property):
    def tag(n, title):
        record_property("criterion", n)
        record_property("title", title)

    return tag


def generic():
    return random_potential(2, 2, 0)


def test_criterion_1_cw_subcritical(criterion):
    criterion(1, "Curie-Weiss subcritical, beta=0.5")
    start = time.perf_counter()
    sol = solve_quadratic(cw_potential(), 0.5)
    assert sol.J == 1
    assert abs(sol.t_list[0]) <= 1e-10
    assert abs(sol.P2 - LOG2) <= 1e-10
    assert abs(pgm_cw_collapse(0.5, 10**5, (P, P)) - 0.25) <= 5e-3
    assert time.perf_counter() - start < 5


def test_criterion_2_cw_supercritical(criterion):
    criterion(2, "Curie-Weiss supercritical, beta=2")
    start = time.perf_counter()
    cw = cw_solution(2.0)
    assert abs(cw.xi - math.tanh(2 * cw.xi)) <= 1e-12
    assert cw.xi == pytest.approx(0.957504, abs=1e-6)
    sol = solve_quadratic(cw_potential(), 2.0)
    assert sol.J == 2
    np.testing.assert_allclose(sol.c_list, [0.5, 0.5], atol=1e-6)
    predicted = limit_measure(sol)((P, P))
    assert predicted == pytest.approx(0.479204, abs=1e-6)
    assert predicted == pytest.approx(cw.limit((P, P)), abs=1e-9)
    assert abs(pgm_cw_collapse(2.0, 10**6, (P, P)) - predicted) <= 5e-3
    assert time.perf_counter() - start < 30


def test_criterion_3_cw_critical_order(criterion):
    criterion(3, "Curie-Weiss critical order, beta=1")
    k, d = laplace_order(cw_potential(), 1.0, 0.0)
    assert k == 4
    assert abs(d + 2.0) <= 1e-3
    sol = solve_quadratic(cw_potential(), 1.0)
    assert abs(sol.P2 - LOG2) <= 1e-10


def test_criterion_4_potts(criterion):
    criterion(4, "Curie-Weiss-Potts, q=3")
    start = time.perf_counter()
    bc = cwp_beta_c(3)
    assert abs(bc - 4 * LOG2) <= 1e-12
    assert abs(cwp_s(3, bc) - 0.5) <= 1e-10
    w = (0, 0)
    assert abs(pgm_cwp_collapse(3, 3.5, 2000, w) - cwp_limit_cylinder(3, 3.5, w)) <= 1e-2
    det0 = bc**3 * (1 - bc / 3) ** 2
    det1 = bc**3 * (1 - bc / 3) * (1 - bc / 6)
    assert abs(np.prod(cwp_hessian_eigs(3, bc, "nu0")) - det0) <= 1e-10
    assert abs(np.prod(cwp_hessian_eigs(3, bc, "nu1")) - det1) <= 1e-10
    assert time.perf_counter() - start < 60


def test_criterion_5_generic_pipeline(criterion):
    criterion(5, "generic potential, full pipeline, beta=1.5")
    start = time.perf_counter()
    pot, beta = generic(), 1.5
    words = [tuple(w) for w in all_words(2, 2)]
    quad18 = pgm_quadrature_many(pot, beta, 18, words)
    exact18 = pgm_exact_table(pot, beta, 18, 2)
    assert np.max(np.abs(quad18 - exact18)) <= 1e-8
    sol = solve_quadratic(pot, beta)
    predicted = limit_measure(sol).table(2)
    assert np.max(np.abs(pgm_quadrature_many(pot, beta, 500, words) - predicted)) <= 1e-2
    for t in sol.t_list:
        assert abs(stationarity_residual(pot, beta, t)) <= 1e-10
    assert time.perf_counter() - start < 60


def test_criterion_6_variational_principle(criterion):
    criterion(6, "variational principle over 1000 Markov chains")
    pot, beta = generic(), 1.5
    sol = solve_quadratic(pot, beta)
    rng = np.random.default_rng(20240601)
    worst = -math.inf
    for _ in range(1000):
        mm = MarkovMeasure.random(2, 1, rng)
        worst = max(worst, markov_free_energy(mm, pot, beta) - sol.P2)
    assert worst <= 1e-9
    for mm in maximizing_chains(sol):
        assert abs(markov_free_energy(mm, pot, beta) - sol.P2) <= 1e-8


@pytest.mark.parametrize("name,beta", [("cw", 0.5), ("cw", 1.0), ("cw", 2.0), ("generic", 1.5)])
def test_criterion_7_domination(criterion, name, beta):
    criterion(7, "Legendre domination on a 101-point grid")
    pot = cw_potential() if name == "cw" else generic()
    sol = solve_quadratic(pot, beta)
    zs = np.linspace(-pot.A, pot.A, 101)
    phibar = legendre_hbar_many(pot, zs) + 0.5 * beta * zs**2
    assert np.all(phibar <= phi_os(pot, beta, zs) + 1e-9)
    # the maximizers themselves join the grid so the two maxima are comparable
    ts = np.array(sol.t_list)
    at_max = legendre_hbar_many(pot, ts) + 0.5 * beta * ts**2
    assert abs(max(phibar.max(), at_max.max()) - sol.P2) <= 1e-8


def test_criterion_8_gibbs_bound(criterion):
    criterion(8, "Gibbs bound, words of length 2 to 14")
    pot = generic()
    spec = spectral(pot, 1.0)
    C = gibbs_constant(spec)
    worst = 0.0
    for n in range(2, 15):
        logs = np.log(dgm_table(spec, n))
        for w, lw in zip(all_words(2, n), logs):
            dev = lw - (spec.xi * boundary_birkhoff(pot, tuple(w)) - n * spec.log_lambda)
            worst = max(worst, abs(dev))
    assert worst <= C


def test_criterion_9_oracle_normalization_symmetry(criterion):
    criterion(9, "oracle normalization and symmetry")
    pot, cw = generic(), cw_potential()
    for p in (1, 2, 3):
        words2 = [tuple(w) for w in all_words(2, p)]
        words3 = [tuple(w) for w in all_words(3, p)]
        sums = {
            "exact": pgm_exact_table(pot, 1.5, 14, p).sum(),
            "exact_cw": pgm_exact_table(cw, 2.0, 14, p).sum(),
            "cw_collapse": math.fsum(pgm_cw_collapse(2.0, 1000, w) for w in words2),
            "cwp_collapse": math.fsum(pgm_cwp_collapse(3, 3.5, 300, w) for w in words3),
            "quadrature": pgm_quadrature_many(pot, 1.5, 60, words2).sum(),
        }
        for method, total in sums.items():
            assert abs(total - 1.0) <= 1e-10, (method, p, total)
    for p in (1, 2, 3):
        for w in itertools.product((M, P), repeat=p):
            flipped = tuple(1 - a for a in w)
            assert pgm_cw_collapse(2.0, 1000, w) == pgm_cw_collapse(2.0, 1000, flipped)
            assert pgm_exact(cw, 2.0, 12, w) == pgm_exact(cw, 2.0, 12, flipped)
    for w in itertools.product(range(3), repeat=3):
        for perm in itertools.permutations(range(3)):
            v = tuple(perm[a] for a in w)
            assert pgm_cwp_collapse(3, 3.5, 300, v) == pgm_cwp_collapse(3, 3.5, 300, w)
