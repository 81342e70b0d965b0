import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from congestion_gibbs.dynamics import (
    ChainConfig,
    ChainState,
    conditional_log_weights,
    logit_step,
    relaxed_logit_step,
    run_chain,
    suitable_sample,
    swap_players,
)
from congestion_gibbs.game import GameError, potential, potential_extremes
from congestion_gibbs.instances import kuniform_game, random_ep_game, two_link
from congestion_gibbs.verify import (
    empirical_distribution,
    exact_gibbs,
    logit_kernel,
    relaxed_kernel,
    relaxed_mixing_budget,
    tv_distance,
)

STATES = [(0, 0), (0, 1), (1, 0), (1, 1)]


# --- suitable sampler ------------------------------------------------------


def test_suitable_sample_symmetric():
    rng = np.random.default_rng(0)
    hits = sum(suitable_sample([1, 1], [0, 0], rng) for _ in range(20000))
    assert hits / 20000 == pytest.approx(0.5, abs=0.015)


def test_suitable_sample_zero_weight_never_drawn():
    rng = np.random.default_rng(0)
    assert all(suitable_sample([1, 1], [0, -math.inf], rng) == 0 for _ in range(1000))
    assert all(suitable_sample([0, 1], [5, 0], rng) == 1 for _ in range(1000))


def test_suitable_sample_all_zero_errors():
    with pytest.raises(ValueError):
        suitable_sample([1, 1], [-math.inf, -math.inf], np.random.default_rng(0))
    with pytest.raises(ValueError):
        suitable_sample([-1, 1], [0, 0], np.random.default_rng(0))


def test_suitable_sample_frequencies_within_three_sigma():
    # q = (2, 1), a = (ln 3, ln 2): weights 6 and 2
    rng = np.random.default_rng(42)
    N = 1_000_000
    hits = sum(1 for _ in range(N) if suitable_sample([2, 1], [math.log(3), math.log(2)], rng) == 0)
    p = 6 / 8
    assert abs(hits / N - p) <= 3 * math.sqrt(p * (1 - p) / N)


def test_suitable_sample_extreme_logits():
    rng = np.random.default_rng(0)
    assert suitable_sample([1, 1], [-1e6, -1e6 + 50], rng) == 1


# --- logit -----------------------------------------------------------------


def test_logit_at_zero_temperature_is_uniform():
    g = two_link(6)
    for s in STATES:
        for i in range(2):
            lw = conditional_log_weights(g, s, i, 0.0)
            assert np.all(lw == lw[0])


def test_logit_stay_probability_by_hand():
    g = two_link(1)
    lw = conditional_log_weights(g, (0, 1), 0, 1.0)
    p = np.exp(lw) / np.exp(lw).sum()
    assert p[0] == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-15)


def test_logit_step_empirical():
    g = two_link(1)
    rng = np.random.default_rng(3)
    N = 40000
    stay = sum(logit_step(g, ChainState((0, 1)), 1.0, rng).profile == (0, 1) for _ in range(N))
    # P(stay) = 1 / (1 + e^-1), whichever player moves
    assert stay / N == pytest.approx(1 / (1 + math.exp(-1)), abs=0.01)


def hand_relaxed_kernel(x: float) -> np.ndarray:
    lo, hi = math.exp(-x) / (1 + math.exp(-x)), 1 / (1 + math.exp(-x))
    logit = np.array([
        [lo, hi / 2, hi / 2, 0],
        [lo / 2, hi, 0, lo / 2],
        [lo / 2, 0, hi, lo / 2],
        [0, hi / 2, hi / 2, lo],
    ])
    swap = np.array([
        [1, 0, 0, 0],
        [0, 0.5, 0.5, 0],
        [0, 0.5, 0.5, 0],
        [0, 0, 0, 1],
    ])
    return 0.5 * swap + 0.5 * logit


@pytest.mark.parametrize("phi,T", [(1, 1.0), (6, 1.0), (12, 1.0), (3, 0.0)])
def test_relaxed_kernel_matches_hand_matrix(phi, T):
    K = relaxed_kernel(two_link(phi), T)
    assert K.states == STATES
    np.testing.assert_allclose(K.P, hand_relaxed_kernel(T * phi), atol=1e-12, rtol=0)


def test_relaxed_kernel_has_larger_spectral_gap():
    g = two_link(12)

    def gap(K):
        d = np.sqrt(K.pi)
        S = d[:, None] * K.P / d[None, :]
        ev = np.sort(np.linalg.eigvalsh((S + S.T) / 2))
        return 1 - ev[-2]

    assert gap(relaxed_kernel(g, 1.0)) > 100 * gap(logit_kernel(g, 1.0))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_kernels_stochastic_and_reversible(seed):
    rng = np.random.default_rng(seed)
    g = random_ep_game(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)))
    T = float(rng.uniform(0, 2))
    for K in (logit_kernel(g, T), relaxed_kernel(g, T)):
        assert K.stochasticity_residual() <= 1e-12
        assert K.reversibility_residual() <= 1e-10
        assert K.stationarity_residual() <= 1e-10


# --- relaxed step ------------------------------------------------------------


def test_swap_rule():
    assert swap_players((0, 1), 0, 1) == (1, 0)
    assert swap_players((0, 1), 1, 1) == (0, 1)


def test_swap_preserves_potential():
    g = random_ep_game(np.random.default_rng(1), 4, 3)
    s = (0, 1, 2, 1)
    assert all(potential(g, swap_players(s, i, j)) == potential(g, s) for i in range(4) for j in range(4))


def test_relaxed_rejects_asymmetric_game():
    g = kuniform_game((2, 1), [[0, 1], [0, 1], [0, 1]])
    with pytest.raises(GameError):
        relaxed_logit_step(g, ChainState(g.feasible_profile()), 1.0, np.random.default_rng(0))


# --- run_chain ---------------------------------------------------------------


def test_zero_budget_returns_start():
    g = two_link(3)
    tr = run_chain(g, ChainConfig(1.0, seed=1, budget=0), "logit", start=(1, 1))
    assert tr.final.profile == (1, 1) and tr.final.steps == 0


def test_chain_is_deterministic_under_seed():
    g = random_ep_game(np.random.default_rng(8), 3, 3)
    cfg = ChainConfig(0.9, seed=123, budget=300, thin=10)
    a = run_chain(g, cfg, "relaxed")
    b = run_chain(g, cfg, "relaxed")
    assert a.samples == b.samples and len(a.samples) == 30


def test_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(-1.0)
    with pytest.raises(ValueError):
        ChainConfig(1.0, budget=-1)


def test_relaxed_chain_reaches_gibbs_within_budget():
    g, T = two_link(6), 1.0
    budget = math.ceil(relaxed_mixing_budget(2, 2, T, float(potential_extremes(g)[1]), 0.05))
    finals = [
        run_chain(g, ChainConfig(T, seed=s, budget=budget), "relaxed", start=(0, 0)).final.profile
        for s in range(3000)
    ]
    assert tv_distance(empirical_distribution(finals), exact_gibbs(g, T)) <= 0.05
