"""Congestion games: cost tables, EP networks, potentials and Nash predicates."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterator, Sequence, Union

# Cost of using a resource above its capacity. Compares greater than every
# finite value and maps to weight exactly zero (log-weight -inf).
INF = math.inf

Number = Union[Fraction, float]
StrategyProfile = tuple  # tuple[int, ...] of per-player strategy indices


class GameError(ValueError):
    """Raised for malformed or infeasible games."""


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12)
    return Fraction(x)


@dataclass(frozen=True)
class CostFunction:
    """Tabulated non-decreasing cost c(x) for loads x = 1..len(values).

    Loads above ``capacity`` cost ``INF``. ``capacity=None`` means
    uncapacitated.
    """

    values: tuple[Fraction, ...]
    capacity: int | None = None

    def __post_init__(self) -> None:
        vals = tuple(as_fraction(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if any(v < 0 for v in vals):
            raise GameError(f"costs must be non-negative, got {list(map(str, vals))}")
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise GameError(f"costs must be non-decreasing, got {list(map(str, vals))}")
        if self.capacity is not None and self.capacity < 0:
            raise GameError(f"capacity must be >= 0, got {self.capacity}")

    def __call__(self, load: int) -> Number:
        if self.capacity is not None and load > self.capacity:
            return INF
        if load <= 0:
            return Fraction(0)
        if load > len(self.values):
            raise GameError(f"cost table has {len(self.values)} entries, load {load} requested")
        return self.values[load - 1]

    def cap(self, n: int) -> int:
        return n if self.capacity is None else min(self.capacity, n)

    @cached_property
    def prefix(self) -> tuple[Fraction, ...]:
        """prefix[x] = c(1) + ... + c(x) for loads within the table."""
        out = [Fraction(0)]
        for v in self.values:
            out.append(out[-1] + v)
        return tuple(out)

    def potential(self, load: int) -> Number:
        if self.capacity is not None and load > self.capacity:
            return INF
        return self.prefix[load]


# --- extension-parallel composition trees ---------------------------------


@dataclass(frozen=True)
class Arc:
    resource: int


@dataclass(frozen=True)
class Parallel:
    left: "EPNetwork"
    right: "EPNetwork"


@dataclass(frozen=True)
class Extension:
    """A single arc in series with an EP subnetwork."""

    resource: int
    sub: "EPNetwork"


EPNetwork = Union[Arc, Parallel, Extension]


def network_arcs(net: EPNetwork) -> list[int]:
    if isinstance(net, Arc):
        return [net.resource]
    if isinstance(net, Parallel):
        return network_arcs(net.left) + network_arcs(net.right)
    return [net.resource] + network_arcs(net.sub)


def enumerate_paths(net: EPNetwork) -> list[frozenset[int]]:
    """All o,d-paths as resource sets, depth-first with left before right."""
    if isinstance(net, Arc):
        return [frozenset([net.resource])]
    if isinstance(net, Parallel):
        return enumerate_paths(net.left) + enumerate_paths(net.right)
    if isinstance(net, Extension):
        return [p | {net.resource} for p in enumerate_paths(net.sub)]
    raise TypeError(f"not an EP network node: {net!r}")


# --- game structures -------------------------------------------------------


@dataclass(frozen=True)
class EP:
    network: EPNetwork


@dataclass(frozen=True)
class KUniform:
    k: tuple[int, ...]


@dataclass(frozen=True)
class Explicit:
    strategies: tuple[tuple[frozenset[int], ...], ...]


Structure = Union[EP, KUniform, Explicit]


@dataclass(frozen=True)
class LoadProfile:
    kind: str  # "resource" or "strategy"
    counts: tuple[int, ...]

    @property
    def modulus(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class CongestionGame:
    """An unweighted (capacitated) congestion game.

    Resources are indexed 0..m-1, players 0..n-1. A strategy profile is a
    tuple of per-player indices into ``strategy_sets[i]``.
    """

    n: int
    resources: tuple[CostFunction, ...]
    structure: Structure
    resource_names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise GameError(f"a game needs at least one player, got n={self.n}")
        m = len(self.resources)
        if m == 0:
            raise GameError("a game needs at least one resource")
        for e, c in enumerate(self.resources):
            if len(c.values) < c.cap(self.n):
                raise GameError(
                    f"resource {self._name(e)}: cost table has {len(c.values)} entries, "
                    f"needs {c.cap(self.n)}"
                )
        s = self.structure
        if isinstance(s, EP):
            arcs = network_arcs(s.network)
            if len(set(arcs)) != len(arcs):
                raise GameError("EP network reuses a resource")
            if sorted(arcs) != list(range(m)):
                raise GameError(f"EP network must use each of the {m} resources exactly once")
        elif isinstance(s, KUniform):
            if len(s.k) != self.n:
                raise GameError(f"k has {len(s.k)} entries for {self.n} players")
            if any(not 1 <= ki <= m for ki in s.k):
                raise GameError(f"need 1 <= k_i <= m={m}, got k={list(s.k)}")
        elif isinstance(s, Explicit):
            if len(s.strategies) != self.n:
                raise GameError(f"{len(s.strategies)} strategy sets for {self.n} players")
            for i, S in enumerate(s.strategies):
                if not S:
                    raise GameError(f"player {i} has an empty strategy set")
                if any(not r or max(r) >= m or min(r) < 0 for r in S):
                    raise GameError(f"player {i} has a strategy with unknown resources")
        else:
            raise GameError(f"unknown structure {s!r}")
        if self.feasible_profile() is None:
            raise GameError("game has no feasible strategy profile")

    def _name(self, e: int) -> str:
        return self.resource_names[e] if self.resource_names else str(e)

    @property
    def m(self) -> int:
        return len(self.resources)

    @property
    def is_ep(self) -> bool:
        return isinstance(self.structure, EP)

    @cached_property
    def paths(self) -> list[frozenset[int]]:
        if not self.is_ep:
            raise GameError("paths are only defined for EP games")
        return enumerate_paths(self.structure.network)

    @cached_property
    def strategy_sets(self) -> tuple[tuple[frozenset[int], ...], ...]:
        s = self.structure
        if isinstance(s, EP):
            return (tuple(self.paths),) * self.n
        if isinstance(s, KUniform):
            cache: dict[int, tuple[frozenset[int], ...]] = {}
            for ki in set(s.k):
                cache[ki] = tuple(frozenset(c) for c in itertools.combinations(range(self.m), ki))
            return tuple(cache[ki] for ki in s.k)
        return s.strategies

    @cached_property
    def _strategy_lookup(self) -> tuple[dict[frozenset[int], int], ...]:
        return tuple({S: j for j, S in enumerate(Si)} for Si in self.strategy_sets)

    def strategy_index(self, player: int, resources) -> int:
        return self._strategy_lookup[player][frozenset(resources)]

    @cached_property
    def is_symmetric(self) -> bool:
        sets = self.strategy_sets
        return all(S == sets[0] for S in sets[1:])

    @property
    def num_strategies(self) -> tuple[int, ...]:
        return tuple(len(S) for S in self.strategy_sets)

    @cached_property
    def incidence(self) -> tuple[tuple[int, ...], ...]:
        """For symmetric games: incidence[p] is the 0/1 resource vector of strategy p."""
        if not self.is_symmetric:
            raise GameError("strategy incidence needs a symmetric game")
        return tuple(tuple(int(e in S) for e in range(self.m)) for S in self.strategy_sets[0])

    @cached_property
    def float_prefix(self) -> list[list[float]]:
        """float_prefix[e][x]: float potential of resource e at load x (INF above capacity)."""
        out = []
        for c in self.resources:
            cap = c.cap(self.n)
            out.append([float(c.prefix[x]) if x <= cap else INF for x in range(self.n + 1)])
        return out

    @cached_property
    def strategy_tuples(self) -> list[list[tuple[int, ...]]]:
        return [[tuple(sorted(S)) for S in Si] for Si in self.strategy_sets]

    @cached_property
    def capacities(self) -> tuple[int, ...]:
        return tuple(c.cap(self.n) for c in self.resources)

    def validate(self, s: StrategyProfile) -> None:
        if len(s) != self.n:
            raise GameError(f"profile has {len(s)} entries for {self.n} players")
        for i, j in enumerate(s):
            if not 0 <= j < len(self.strategy_sets[i]):
                raise GameError(f"player {i}: strategy index {j} out of range")

    def profiles(self) -> Iterator[StrategyProfile]:
        """All strategy profiles (feasible or not), lexicographic."""
        return itertools.product(*(range(len(S)) for S in self.strategy_sets))

    def feasible_profiles(self) -> Iterator[StrategyProfile]:
        return (s for s in self.profiles() if self.is_feasible(s))

    def is_feasible(self, s: StrategyProfile) -> bool:
        loads = resource_loads(self, s).counts
        return all(x <= u for x, u in zip(loads, self.capacities))

    def feasible_profile(self) -> StrategyProfile | None:
        """A deterministic feasible profile, or None if none exists."""
        s = self.structure
        if isinstance(s, KUniform):
            return _gale_ryser_profile(self, s.k)
        prof = _greedy_insertion(self)
        if prof is not None:
            return prof
        if math.prod(len(S) for S in self.strategy_sets) <= 10**6:
            return next(iter(self.feasible_profiles()), None)
        return None


def _greedy_insertion(g: CongestionGame) -> StrategyProfile | None:
    """Insert players one at a time, each on a strategy of least potential increment."""
    loads = [0] * g.m
    prof = []
    for i in range(g.n):
        best, best_cost = None, INF
        for j, S in enumerate(g.strategy_sets[i]):
            cost = sum((g.resources[e](loads[e] + 1) for e in S), Fraction(0))
            if cost < best_cost:
                best, best_cost = j, cost
        if best is None:
            return None
        prof.append(best)
        for e in g.strategy_sets[i][best]:
            loads[e] += 1
    return tuple(prof)


def _gale_ryser_profile(g: CongestionGame, k: Sequence[int]) -> StrategyProfile | None:
    # Largest-demand player first, each taking the resources with the most
    # remaining capacity; succeeds iff a feasible assignment exists.
    remaining = list(g.capacities)
    rows: list[frozenset[int]] = [frozenset()] * g.n
    for i in sorted(range(g.n), key=lambda i: (-k[i], i)):
        order = sorted(range(g.m), key=lambda e: (-remaining[e], e))[: k[i]]
        if any(remaining[e] <= 0 for e in order):
            return None
        for e in order:
            remaining[e] -= 1
        rows[i] = frozenset(order)
    return tuple(g.strategy_index(i, rows[i]) for i in range(g.n))


# --- loads, potentials, costs ---------------------------------------------


def resource_loads(g: CongestionGame, s: StrategyProfile) -> LoadProfile:
    loads = [0] * g.m
    for i, j in enumerate(s):
        for e in g.strategy_sets[i][j]:
            loads[e] += 1
    return LoadProfile("resource", tuple(loads))


def strategy_loads(g: CongestionGame, s: StrategyProfile) -> LoadProfile:
    if not g.is_symmetric:
        raise GameError("strategy load profiles need a symmetric game")
    z = [0] * len(g.strategy_sets[0])
    for j in s:
        z[j] += 1
    return LoadProfile("strategy", tuple(z))


def strategy_to_resource_loads(g: CongestionGame, alpha: Sequence[int]) -> tuple[int, ...]:
    inc = g.incidence
    return tuple(sum(a * inc[p][e] for p, a in enumerate(alpha)) for e in range(g.m))


def rosenthal_potential(g: CongestionGame, alpha: LoadProfile | Sequence[int]) -> Number:
    """Sum over resources of c_e(1) + ... + c_e(alpha_e); INF above capacity.

    Accepts a resource load profile, or a strategy load profile of a
    symmetric game (projected through the strategy incidence first).
    """
    if isinstance(alpha, LoadProfile):
        counts = alpha.counts
        if alpha.kind == "strategy":
            counts = strategy_to_resource_loads(g, counts)
    else:
        counts = tuple(alpha)
    total = Fraction(0)
    for c, x in zip(g.resources, counts):
        v = c.potential(x)
        if v == INF:
            return INF
        total += v
    return total


def potential(g: CongestionGame, s: StrategyProfile) -> Number:
    return rosenthal_potential(g, resource_loads(g, s))


def player_cost(g: CongestionGame, s: StrategyProfile, i: int) -> Number:
    loads = resource_loads(g, s).counts
    total = Fraction(0)
    for e in g.strategy_sets[i][s[i]]:
        v = g.resources[e](loads[e])
        if v == INF:
            return INF
        total += v
    return total


def deviate(s: StrategyProfile, i: int, j: int) -> StrategyProfile:
    return s[:i] + (j,) + s[i + 1 :]


def is_nash(g: CongestionGame, s: StrategyProfile) -> bool:
    for i in range(g.n):
        current = player_cost(g, s, i)
        for j in range(len(g.strategy_sets[i])):
            if j != s[i] and player_cost(g, deviate(s, i, j), i) < current:
                return False
    return True


def min_potential_profile(g: CongestionGame) -> StrategyProfile:
    """Greedy insertion; each arriving player takes a least-cost path.

    For EP games this reaches a global minimiser of Rosenthal's potential.
    """
    if not g.is_ep:
        raise GameError("greedy potential minimisation is only valid for EP games")
    prof = _greedy_insertion(g)
    if prof is None:
        raise GameError("no feasible profile")
    return prof


def potential_extremes(g: CongestionGame) -> tuple[Number, Number]:
    """(min, max) of the potential over feasible profiles, by enumeration."""
    vals = [potential(g, s) for s in g.feasible_profiles()]
    return min(vals), max(vals)


def symmetric_load_domain(g: CongestionGame) -> list[tuple[int, ...]]:
    """All strategy load profiles alpha with |alpha| = n (lexicographic)."""
    q = len(g.strategy_sets[0])
    return list(compositions(g.n, q))


def compositions(total: int, parts: int, caps: Sequence[int] | None = None) -> Iterator[tuple[int, ...]]:
    """Non-negative integer vectors of length ``parts`` summing to ``total``."""
    caps = caps if caps is not None else (total,) * parts

    def rec(i: int, left: int) -> Iterator[tuple[int, ...]]:
        if i == parts - 1:
            if left <= caps[i]:
                yield (left,)
            return
        rest = sum(caps[i + 1 :])
        for a in range(max(0, left - rest), min(caps[i], left) + 1):
            for tail in rec(i + 1, left - a):
                yield (a,) + tail

    if parts == 0:
        if total == 0:
            yield ()
        return
    yield from rec(0, total)


def multinomial(n: int, alpha: Sequence[int]) -> int:
    """n! / alpha!, the number of profiles of a symmetric game with strategy loads alpha."""
    out = math.factorial(n)
    for a in alpha:
        out //= math.factorial(a)
    return out
