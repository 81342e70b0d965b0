"""Named and randomly generated game instances."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .game import (
    EP,
    Arc,
    CongestionGame,
    CostFunction,
    Explicit,
    Extension,
    GameError,
    KUniform,
    Parallel,
    network_arcs,
)


def two_link(phi, n: int = 2) -> CongestionGame:
    """Two parallel links with c(1) = 0 and c(x) = phi for x >= 2."""
    costs = (0,) + (phi,) * (n - 1)
    c = CostFunction(costs)
    return CongestionGame(
        n, (c, c), EP(Parallel(Arc(0), Arc(1))), resource_names=("a", "b")
    )


def four_path_network() -> Parallel:
    """Two parallel arcs then an arc, in parallel with an arc then two parallel arcs."""
    upper = Extension(2, Parallel(Arc(0), Arc(1)))
    lower = Extension(3, Parallel(Arc(4), Arc(5)))
    return Parallel(upper, lower)


def series_gadget_game(costs, n: int = 2) -> CongestionGame:
    """Two 2-parallel-arc gadgets in series: the smallest non-EP network.

    Resources 0,1 form the first gadget, 2,3 the second; ``costs`` gives
    one cost table per resource.
    """
    paths = tuple(frozenset(p) for p in ((0, 2), (0, 3), (1, 2), (1, 3)))
    res = tuple(CostFunction(tuple(c)) for c in costs)
    return CongestionGame(n, res, Explicit((paths,) * n))


def random_ep_network(rng: np.random.Generator, num_paths: int, depth: int = 0):
    """Random EP composition tree with exactly ``num_paths`` paths.

    Resource ids are placeholders (-1) and renumbered by ``_number``.
    """
    extend = depth < 3 and rng.random() < 0.3
    if num_paths == 1:
        node = Arc(-1)
    else:
        left = int(rng.integers(1, num_paths))
        node = Parallel(
            random_ep_network(rng, left, depth + 1),
            random_ep_network(rng, num_paths - left, depth + 1),
        )
    if extend:
        node = Extension(-1, node)
    return node


def _number(net, counter):
    if isinstance(net, Arc):
        counter[0] += 1
        return Arc(counter[0] - 1)
    if isinstance(net, Parallel):
        left = _number(net.left, counter)
        return Parallel(left, _number(net.right, counter))
    counter[0] += 1
    rid = counter[0] - 1
    return Extension(rid, _number(net.sub, counter))


def random_cost(rng: np.random.Generator, n: int, max_cost: int) -> CostFunction:
    vals = np.sort(rng.integers(0, max_cost + 1, size=n))
    return CostFunction(tuple(Fraction(int(v)) for v in vals))


def random_ep_game(
    rng: np.random.Generator, n: int, num_paths: int, max_cost: int = 8
) -> CongestionGame:
    net = _number(random_ep_network(rng, num_paths), [0])
    m = len(network_arcs(net))
    res = tuple(random_cost(rng, n, max_cost) for _ in range(m))
    return CongestionGame(n, res, EP(net))


def kuniform_game(k, costs, capacities=None) -> CongestionGame:
    capacities = capacities or (None,) * len(costs)
    res = tuple(CostFunction(tuple(c), u) for c, u in zip(costs, capacities))
    return CongestionGame(len(k), res, KUniform(tuple(k)))


def random_kuniform_game(
    rng: np.random.Generator, k, m: int, u_max: int, max_cost: int = 8
) -> CongestionGame:
    """Random capacitated k-uniform game; capacities drawn from 1..u_max until feasible."""
    n = len(k)
    if max(k) > m:
        raise GameError(f"need k_i <= m={m}, got k={list(k)}")
    if sum(k) > m * min(u_max, n):
        raise GameError(f"demand {sum(k)} exceeds total capacity {m * min(u_max, n)}")
    while True:
        caps = [int(rng.integers(1, u_max + 1)) for _ in range(m)]
        if sum(min(u, n) for u in caps) < sum(k):
            continue
        res = tuple(
            CostFunction(random_cost(rng, min(u, n), max_cost).values, u) for u in caps
        )
        try:
            return CongestionGame(n, res, KUniform(tuple(k)))
        except GameError:
            continue
