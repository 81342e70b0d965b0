import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from congestion_gibbs.game import EP, Arc, CongestionGame, CostFunction, Parallel, compositions
from congestion_gibbs.instances import random_ep_game, series_gadget_game, two_link
from congestion_gibbs.verify import (
    ExactDistribution,
    Finding,
    KernelMatrix,
    VerificationError,
    check_exact_potential,
    check_m_concave,
    check_m_convex,
    empirical_distribution,
    exact_gibbs,
    exact_mixing_time,
    logit_kernel,
    relaxed_mixing_budget,
    rosenthal_on_loads,
    search_series_violation,
    tv_distance,
    verify_game,
    worst_mixing_time,
)


def test_tv_examples():
    assert tv_distance({0: 0.5, 1: 0.5}, {0: 0.5, 1: 0.5}) == 0
    assert tv_distance({0: 1.0}, {1: 1.0}) == 1
    assert tv_distance([0.5, 0.5], [0.3, 0.7]) == pytest.approx(0.2, abs=1e-15)


def test_exact_distribution_rejects_zero_mass():
    with pytest.raises(ValueError):
        ExactDistribution.from_log_weights([0, 1], [-math.inf, -math.inf])


def test_exact_gibbs_zero_temperature_uniform():
    g = random_ep_game(np.random.default_rng(2), 3, 3)
    np.testing.assert_allclose(exact_gibbs(g, 0.0).probs, 1 / 27, rtol=1e-12)


@pytest.mark.parametrize("phi,T", [(6, 1.0), (12, 0.5), (1, 2.0)])
def test_exact_gibbs_two_link_values(phi, T):
    d = exact_gibbs(two_link(phi), T)
    z = 2 + 2 * math.exp(-T * phi)
    assert d[(0, 1)] == pytest.approx(1 / z, rel=1e-12)
    assert d[(0, 0)] == pytest.approx(math.exp(-T * phi) / z, rel=1e-12)


def test_exact_gibbs_against_independent_sum():
    g = random_ep_game(np.random.default_rng(17), 3, 3)
    T = 0.9
    paths = g.paths
    w = {}
    # enumerate in reverse lexicographic order, potential from resource loads
    for s in reversed(list(itertools.product(range(len(paths)), repeat=3))):
        load = [0] * g.m
        for p in s:
            for e in paths[p]:
                load[e] += 1
        phi = sum(sum(g.resources[e](x) for x in range(1, load[e] + 1)) for e in range(g.m))
        w[s] = math.exp(-T * float(phi))
    z = math.fsum(w.values())
    d = exact_gibbs(g, T)
    for s, v in w.items():
        assert d[s] == pytest.approx(v / z, rel=1e-10)


def test_empirical_distribution():
    with pytest.raises(ValueError):
        empirical_distribution([])
    assert empirical_distribution(np.array([[1, 2]])) == {(1, 2): 1.0}
    assert empirical_distribution(["a", "b", "a", "a"]) == {"a": 0.75, "b": 0.25}


# --- mixing ---------------------------------------------------------------------


def test_mixing_time_already_stationary():
    K = KernelMatrix([0], np.array([[1.0]]), np.array([1.0]))
    assert exact_mixing_time(K, 0) == 0


def test_mixing_time_two_state_coin():
    K = KernelMatrix([0, 1], np.full((2, 2), 0.5), np.array([0.5, 0.5]))
    assert exact_mixing_time(K, 0) == 1
    assert worst_mixing_time(K) == 1


def test_mixing_time_lazy_flip_by_hand():
    # stay with prob 1 - p: TV from a corner is (1 - 2p)^t / 2
    p = 0.1
    K = KernelMatrix([0, 1], np.array([[1 - p, p], [p, 1 - p]]), np.array([0.5, 0.5]))
    t = math.ceil(math.log(0.5) / math.log(1 - 2 * p))
    assert exact_mixing_time(K, 0) == t


def test_mixing_time_guard():
    K = KernelMatrix([0, 1], np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0.5, 0.5]))
    with pytest.raises(VerificationError):
        exact_mixing_time(K, 0, max_steps=64)


def test_two_link_logit_mixing_is_slow():
    K = logit_kernel(two_link(12), 1.0)
    # leaving an equilibrium corner needs a move through a weight e^-12 state
    assert exact_mixing_time(K, (0, 1)) >= math.exp(12) / 100
    assert exact_mixing_time(K, (0, 0)) == 1


def test_relaxed_mixing_budget_values():
    # n=2, q=2: ln ln 2 < 0 is clamped
    assert relaxed_mixing_budget(2, 2, 1.0, 6, 0.05) == pytest.approx(8 * (math.log(2) + math.log(4800)) + 8)
    assert relaxed_mixing_budget(3, 16, 2.0, 5, 0.1) == pytest.approx(
        27 * (math.log(3) + math.log(math.log(16)) + math.log(2000)) + 27
    )
    assert relaxed_mixing_budget(1, 1, 0.0, 0, 0.1) == 1


# --- exchange checks ----------------------------------------------------------------


def test_separable_convex_is_m_convex():
    dom = list(compositions(4, 3))
    f = lambda a: sum(x * x for x in a) + a[0]
    assert check_m_convex(f, dom).passed
    assert check_m_concave(lambda a: -f(a), dom).passed


def test_non_convex_fails():
    dom = list(compositions(4, 2))
    res = check_m_convex(lambda a: a[0] * a[1], dom)
    assert not res.passed and res.witness is not None


def test_series_gadget_violation_witness():
    found = search_series_violation()
    assert found is not None
    costs, res = found
    assert costs == [(0, 0), (0, 1), (0, 0), (0, 1)]
    a, b, i = res.witness
    assert (a, b, i) == ((0, 1, 1, 0), (1, 0, 0, 1), 1)
    phi = rosenthal_on_loads(series_gadget_game(costs))
    assert phi(a) + phi(b) == 0
    # both exchanges j in {0, 3} cost one unit
    assert phi((1, 0, 1, 0)) + phi((0, 1, 0, 1)) == 1
    assert phi((0, 0, 1, 1)) + phi((1, 1, 0, 0)) == 1


def test_exact_potential_single_player():
    g = CongestionGame(1, (CostFunction((3,)), CostFunction((Fraction(1, 2),))), EP(Parallel(Arc(0), Arc(1))))
    assert check_exact_potential(g).passed


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_exact_potential_random_games(seed):
    rng = np.random.default_rng(seed)
    assert check_exact_potential(random_ep_game(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)))).passed


# --- reports ------------------------------------------------------------------


def test_finding_line_format():
    assert Finding("x", "g", 0.5, 1e-10, True).line() == "x\tg\t0.5\t1e-10\tPASS"
    assert Finding("y", "h", None, None, False).line() == "y\th\tNone\tNone\tFAIL"


def test_verify_game_all_pass_on_two_link():
    rows = verify_game(two_link(6), "two-link")
    assert rows and all(r.passed for r in rows)
    assert {r.check for r in rows} >= {"exact-potential", "logit-reversible", "relaxed-stationary", "stage-composition"}
