import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from congestion_gibbs.ep import ep_log_weight, ep_matroid
from congestion_gibbs.instances import random_ep_game, two_link
from congestion_gibbs.matroid import (
    AlphaTable,
    LogWeightFn,
    MatroidSpec,
    PolarizedBase,
    base_exchange_step,
    batch_exchange_steps,
    initial_alpha,
    initial_base,
    multichoose,
    polarized_log_weight,
    sample_polymatroid_base,
    sample_polymatroid_bases,
    step_budget,
)
from congestion_gibbs.verify import (
    base_exchange_kernel,
    exact_ep_loads,
    lumped_exchange_kernel,
    tv_distance,
)


def const(v=0.0):
    return LogWeightFn(lambda a: v, "const")


def small_ep(seed, n_max=3, q_max=3, T=None):
    rng = np.random.default_rng(seed)
    g = random_ep_game(rng, int(rng.integers(1, n_max + 1)), int(rng.integers(1, q_max + 1)))
    T = float(rng.uniform(0, 1.5)) if T is None else T
    return g, T


seeds = st.integers(0, 2**32 - 1)


# --- counting and polarization ---------------------------------------------


def test_multichoose_examples():
    assert multichoose(2, (2, 1)) == 2
    assert multichoose(2, (1, 1)) == 4
    assert multichoose(3, (0, 0, 0)) == 1
    assert multichoose((3, 1), (2, 1)) == 3


def test_multichoose_rejects_out_of_range():
    with pytest.raises(ValueError):
        multichoose(2, (3,))


def test_polarization_worked_example():
    # p = x1^2 x2 + x1 x2 with d = (2, 2): both coefficients are 1
    w = LogWeightFn(lambda a: 0.0 if a in ((2, 1), (1, 1)) else -math.inf)
    assert math.exp(polarized_log_weight(w, (2, 2), (2, 1))) == pytest.approx(1 / 2, abs=1e-15)
    assert math.exp(polarized_log_weight(w, (2, 2), (1, 1))) == pytest.approx(1 / 4, abs=1e-15)
    assert polarized_log_weight(w, (2, 2), (0, 2)) == -math.inf


def test_uniform_weight_corner_base():
    r, d = 3, 5
    got = polarized_log_weight(const(), d, (r, 0, 0))
    assert got == pytest.approx(-math.log(math.comb(d, r)))


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_marginal_recovery(seed):
    g, T = small_ep(seed)
    spec, w = ep_matroid(g), ep_log_weight(g, T)
    totals: dict = {}
    for B in spec.bases():
        pb = PolarizedBase.from_elements(B, len(spec.block_sizes))
        totals[pb.alpha] = totals.get(pb.alpha, 0.0) + math.exp(
            polarized_log_weight(w, spec.block_sizes, pb)
        )
    for a, t in totals.items():
        assert t == pytest.approx(math.exp(w(a)), rel=1e-12)


def test_truncated_partition_membership():
    spec = MatroidSpec.truncated_partition((3, 3), (1, 2), 2)
    assert spec.is_base({(0, 0), (1, 2)})
    assert not spec.is_independent({(0, 0), (0, 1)})
    assert not spec.is_base({(1, 0)})
    assert set(spec.polymatroid.members()) == {(0, 2), (1, 1)}


# --- chain -----------------------------------------------------------------


def test_one_uniform_two_elements_is_fair():
    spec = MatroidSpec.uniform(1, (1, 1))
    w = const()
    rng = np.random.default_rng(0)
    B = initial_base(spec, (1, 0))
    counts = Counter(base_exchange_step(spec, w.polarized(spec.block_sizes), B, rng).alpha for _ in range(20000))
    assert counts[(1, 0)] / 20000 == pytest.approx(0.5, abs=0.015)


@pytest.mark.parametrize("x", [0.0, 1.0, 6.0])
def test_two_link_lumped_kernel_row_by_hand(x):
    # w(2,0) = w(0,2) = e^-x, w(1,1) = 2; polarized: e^-x and 1/2
    K = lumped_exchange_kernel(ep_matroid(two_link(x)), ep_log_weight(two_link(x), 1.0))
    row = dict(zip(K.states, K.row((1, 1))))
    move = 0.5 * math.exp(-x) / (1 + math.exp(-x))
    assert row[(0, 2)] == pytest.approx(move, abs=1e-15)
    assert row[(2, 0)] == pytest.approx(move, abs=1e-15)
    assert row[(1, 1)] == pytest.approx(1 / (1 + math.exp(-x)), abs=1e-15)


@given(seeds)
@settings(max_examples=15, deadline=None)
def test_lumped_kernel_is_projection_of_explicit_kernel(seed):
    g, T = small_ep(seed)
    spec, w = ep_matroid(g), ep_log_weight(g, T)
    K = base_exchange_kernel(spec, w)
    L = lumped_exchange_kernel(spec, w)
    q = len(spec.block_sizes)
    alpha_of = [PolarizedBase.from_elements(B, q).alpha for B in K.states]
    for a, B in enumerate(K.states):
        proj: dict = {}
        for b, p in enumerate(K.P[a]):
            proj[alpha_of[b]] = proj.get(alpha_of[b], 0.0) + p
        row = L.row(alpha_of[a])
        for beta, p in proj.items():
            assert p == pytest.approx(row[L.index[beta]], abs=1e-12)


@given(seeds)
@settings(max_examples=15, deadline=None)
def test_exchange_kernels_reversible_and_stationary(seed):
    g, T = small_ep(seed)
    spec, w = ep_matroid(g), ep_log_weight(g, T)
    for K in (base_exchange_kernel(spec, w), lumped_exchange_kernel(spec, w)):
        assert K.stochasticity_residual() <= 1e-12
        assert K.reversibility_residual() <= 1e-12
        assert K.stationarity_residual() <= 1e-10


def test_step_budget_values():
    # ceil(4 * (ln 1 + ln 100) + 4) and ceil(8 * (ln 2 + ln 4) + 8)
    assert step_budget(1, 0.01) == 23
    assert step_budget(2, 0.25) == 25
    assert step_budget(0, 0.1) == 0
    with pytest.raises(ValueError):
        step_budget(2, 1.0)


def test_rank_one_exact_after_one_step():
    g = random_ep_game(np.random.default_rng(4), 1, 3)
    spec, w = ep_matroid(g), ep_log_weight(g, 0.8)
    L = lumped_exchange_kernel(spec, w)
    for row in L.P:
        np.testing.assert_allclose(row, L.pi, atol=1e-14)


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_tv_at_budget_within_eps_and_monotone(seed):
    g, T = small_ep(seed, n_max=4, q_max=4, T=None)
    spec, w = ep_matroid(g), ep_log_weight(g, T)
    L = lumped_exchange_kernel(spec, w)
    v = np.zeros(L.size)
    v[L.index[initial_alpha(spec, w)]] = 1.0
    eps = 0.01
    prev = 1.0
    for _ in range(step_budget(spec.rank, eps)):
        v = v @ L.P
        tv = 0.5 * np.abs(v - L.pi).sum()
        assert tv <= prev + 1e-12
        prev = tv
    assert prev <= eps


def test_batch_engine_matches_lumped_kernel_one_step():
    g = random_ep_game(np.random.default_rng(9), 3, 3)
    spec, w = ep_matroid(g), ep_log_weight(g, 0.5)
    L = lumped_exchange_kernel(spec, w)
    start = initial_alpha(spec, w)
    N = 200_000
    out = batch_exchange_steps(spec, AlphaTable(spec, w), np.tile(start, (N, 1)), 1, np.random.default_rng(1))
    emp = Counter(map(tuple, out.tolist()))
    emp = {k: c / N for k, c in emp.items()}
    exact = dict(zip(L.states, L.row(start)))
    assert tv_distance(emp, exact) <= 0.01


def test_single_chain_and_batch_agree_with_target():
    g = random_ep_game(np.random.default_rng(2), 3, 2)
    T, eps = 0.7, 0.05
    spec, w = ep_matroid(g), ep_log_weight(g, T)
    target = exact_ep_loads(g, T)
    rng = np.random.default_rng(5)
    single = Counter(sample_polymatroid_base(spec, w, eps, rng) for _ in range(3000))
    single = {k: c / 3000 for k, c in single.items()}
    assert tv_distance(single, target) <= eps + 0.05
    batch = sample_polymatroid_bases(spec, w, eps, 100_000, rng)
    emp = Counter(map(tuple, batch.tolist()))
    assert tv_distance({k: c / 100_000 for k, c in emp.items()}, target) <= eps + 0.02


def test_projection_consistency_after_steps():
    g = random_ep_game(np.random.default_rng(3), 3, 3)
    spec, w = ep_matroid(g), ep_log_weight(g, 1.0)
    wp = w.polarized(spec.block_sizes)
    B = initial_base(spec, initial_alpha(spec, w))
    rng = np.random.default_rng(0)
    for _ in range(200):
        B = base_exchange_step(spec, wp, B, rng)
        assert PolarizedBase.from_elements(B.elements, len(spec.block_sizes)).alpha == B.alpha
        assert spec.is_base(B.elements)


def test_no_finite_start_fails_fast():
    spec = MatroidSpec.uniform(1, (1, 1))
    with pytest.raises(ValueError):
        initial_alpha(spec, const(-math.inf))
