"""Gibbs sampling for u-capacitated k-uniform congestion games.

Stage one samples a resource load profile alpha on the K-truncation of a
partition matroid (m blocks of n copies, block j capped at u_j) with
weights either McKay's estimate phi(alpha) or the exact count |G(k, alpha)|
of bipartite graphs with degrees (k, alpha), times exp(-T Phi(alpha)).
Stage two draws a uniform bipartite graph with those degrees.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .dynamics import NEG_INF, log_boltzmann
from .game import (
    CongestionGame,
    GameError,
    KUniform,
    LoadProfile,
    StrategyProfile,
    resource_loads,
    rosenthal_potential,
)
from .matroid import AlphaTable, LogWeightFn, MatroidSpec, sample_polymatroid_base, sample_polymatroid_bases

MAX_ROWS = 12
MAX_CELLS = 120


@lru_cache(maxsize=None)
def log_factorial(k: int) -> float:
    return math.log(math.factorial(k))


@dataclass(frozen=True)
class DegreeSequence:
    k: tuple[int, ...]
    alpha: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "k", tuple(int(x) for x in self.k))
        object.__setattr__(self, "alpha", tuple(int(x) for x in self.alpha))
        if any(x < 0 for x in self.k + self.alpha):
            raise ValueError("degrees must be non-negative")

    @property
    def balanced(self) -> bool:
        return sum(self.k) == sum(self.alpha)


def falling(x: int, b: int) -> int:
    """[x]_b = x (x-1) ... (x-b+1)."""
    out = 1
    for t in range(b):
        out *= x - t
    return out


@dataclass(frozen=True)
class McKayTerms:
    K: int
    K2: int
    A2: int
    prefactor: int  # K! / (prod k_i! prod alpha_j!), exact

    @classmethod
    def of(cls, seq: DegreeSequence) -> "McKayTerms":
        K = sum(seq.k)
        denom = 1
        for x in seq.k + seq.alpha:
            denom *= math.factorial(x)
        return cls(
            K=K,
            K2=sum(falling(x, 2) for x in seq.k),
            A2=sum(falling(x, 2) for x in seq.alpha),
            prefactor=math.factorial(K) // denom,
        )

    @property
    def correction(self) -> float:
        return self.K2 * self.A2 / self.K**2 if self.K else 0.0


def mckay_estimate(seq: DegreeSequence) -> float:
    """log phi(alpha) = log K! - sum log k_i! - sum log alpha_j! - (K2/K^2) A2."""
    if not seq.balanced:
        raise ValueError("degree sums differ")
    K = sum(seq.k)
    lp = log_factorial(K) - math.fsum(log_factorial(x) for x in seq.k + seq.alpha)
    t = McKayTerms.of(seq)
    return lp - t.correction


def realizable(seq: DegreeSequence) -> bool:
    """Gale-Ryser: some 0/1 matrix has row sums k and column sums alpha."""
    if not seq.balanced:
        return False
    cols = sorted(seq.alpha, reverse=True)
    top = 0
    for t, c in enumerate(cols, start=1):
        top += c
        if top > sum(min(x, t) for x in seq.k):
            return False
    return True


# --- exact counting over residual row-demand multisets --------------------


def _check_guard(seq: DegreeSequence, max_rows: int, max_cells: int) -> None:
    n, m = len(seq.k), len(seq.alpha)
    if n > max_rows or n * m > max_cells:
        raise ValueError(
            f"degree sequence {n}x{m} exceeds the counting guard "
            f"(rows <= {max_rows}, rows*cols <= {max_cells})"
        )


def _column_moves(state: tuple[int, ...], c: int):
    """Ways to place c ones into rows with residual demands ``state``.

    Yields (multiplicity, take) where take[v] rows of residual value v are
    decremented; multiplicity is prod binom(#rows with value v, take[v]).
    """
    groups = sorted(Counter(x for x in state if x > 0).items())

    def rec(g: int, left: int):
        if g == len(groups):
            if left == 0:
                yield 1, ()
            return
        v, cnt = groups[g]
        for t in range(min(cnt, left) + 1):
            for mult, rest in rec(g + 1, left - t):
                yield math.comb(cnt, t) * mult, ((v, t),) + rest

    yield from rec(0, c)


def _apply(state: tuple[int, ...], take) -> tuple[int, ...]:
    vals = list(state)
    for v, t in take:
        for _ in range(t):
            vals[vals.index(v)] -= 1
    return tuple(sorted((x for x in vals if x > 0), reverse=True))


@lru_cache(maxsize=None)
def _count(cols: tuple[int, ...], state: tuple[int, ...]) -> int:
    if not cols:
        return 1 if not state else 0
    if sum(cols) != sum(state) or (state and state[0] > len(cols)):
        return 0
    total = 0
    for mult, take in _column_moves(state, cols[0]):
        total += mult * _count(cols[1:], _apply(state, take))
    return total


def _norm(state) -> tuple[int, ...]:
    return tuple(sorted((x for x in state if x > 0), reverse=True))


def exact_bipartite_count(
    seq: DegreeSequence, max_rows: int = MAX_ROWS, max_cells: int = MAX_CELLS
) -> int:
    """Number of 0/1 matrices with row sums k and column sums alpha."""
    _check_guard(seq, max_rows, max_cells)
    if not seq.balanced:
        return 0
    return _count(seq.alpha, _norm(seq.k))


def _randbelow(rng: np.random.Generator, n: int) -> int:
    """Uniform integer in [0, n) for arbitrarily large n."""
    if n <= 2**62:
        return int(rng.integers(n))
    bits = n.bit_length()
    while True:
        x = 0
        for _ in range((bits + 61) // 62):
            x = (x << 62) | int(rng.integers(2**62))
        x >>= (-bits) % 62
        if x < n:
            return x


@lru_cache(maxsize=None)
def _weighted_moves(cols: tuple[int, ...], state: tuple[int, ...]):
    """Moves for column cols[0] from ``state``, each weighted by its completions."""
    moves = []
    for mult, take in _column_moves(state, cols[0]):
        w = mult * _count(cols[1:], _apply(state, take))
        if w:
            moves.append((w, tuple((v, t) for v, t in take if t)))
    return sum(w for w, _ in moves), tuple(moves)


def sample_bipartite_uniform(
    seq: DegreeSequence,
    rng: np.random.Generator,
    max_rows: int = MAX_ROWS,
    max_cells: int = MAX_CELLS,
) -> tuple[frozenset[int], ...]:
    """Uniform bipartite graph with degrees (k, alpha), as per-row column sets.

    Columns are filled left to right; the multiset move is chosen with
    probability proportional to its number of completions, then the rows
    within each residual-value class uniformly.
    """
    _check_guard(seq, max_rows, max_cells)
    if exact_bipartite_count(seq, max_rows, max_cells) == 0:
        raise ValueError(f"no bipartite graph has degrees {seq}")
    resid = list(seq.k)
    rows: list[set[int]] = [set() for _ in seq.k]
    cols = seq.alpha
    for j in range(len(cols)):
        total, moves = _weighted_moves(cols[j:], _norm(resid))
        x = _randbelow(rng, total)
        for w, take in moves:
            if x < w:
                break
            x -= w
        # take is ascending in v: a decremented row never joins a later class
        for v, t in take:
            cls = [i for i, r in enumerate(resid) if r == v]
            # partial Fisher-Yates: t distinct rows of the class
            for a in range(t):
                b = a + int(rng.integers(len(cls) - a))
                cls[a], cls[b] = cls[b], cls[a]
                rows[cls[a]].add(j)
                resid[cls[a]] -= 1
    return tuple(frozenset(r) for r in rows)


# --- the game-level pipeline ----------------------------------------------


def _require_kuniform(g: CongestionGame) -> tuple[int, ...]:
    if not isinstance(g.structure, KUniform):
        raise GameError("this sampler needs a capacitated k-uniform game")
    return g.structure.k


def cap_matroid(g: CongestionGame) -> MatroidSpec:
    """K-truncation of the partition matroid with m blocks of n copies, block j capped at u_j."""
    k = _require_kuniform(g)
    return MatroidSpec.truncated_partition((g.n,) * g.m, g.capacities, sum(k))


def cap_log_weight(
    g: CongestionGame,
    temperature: float,
    mode: str = "mckay",
    max_rows: int = MAX_ROWS,
    max_cells: int = MAX_CELLS,
) -> LogWeightFn:
    """alpha -> log phi(alpha) - T Phi(alpha) (mckay) or log |G(k,alpha)| - T Phi(alpha) (exact)."""
    k = _require_kuniform(g)
    if mode not in ("mckay", "exact"):
        raise ValueError(f"unknown weight mode {mode!r}")

    def f(alpha):
        lw = log_boltzmann(rosenthal_potential(g, alpha), temperature)
        if lw == NEG_INF:
            return NEG_INF
        seq = DegreeSequence(k, alpha)
        if mode == "mckay":
            # no graph realizes seq: stage two would have nothing to draw
            return mckay_estimate(seq) + lw if realizable(seq) else NEG_INF
        cnt = exact_bipartite_count(seq, max_rows, max_cells)
        return math.log(cnt) + lw if cnt else NEG_INF

    return LogWeightFn(f, name=f"cap-{mode}(T={temperature})")


def feasible_loads(g: CongestionGame) -> tuple[int, ...]:
    return resource_loads(g, g.feasible_profile()).counts


def sample_load_profile_cap(
    g: CongestionGame,
    temperature: float,
    eps: float,
    rng: np.random.Generator,
    weight_mode: str = "mckay",
    mix_constant: float = 4.0,
) -> LoadProfile:
    spec = cap_matroid(g)
    w = cap_log_weight(g, temperature, weight_mode)
    alpha = sample_polymatroid_base(spec, w, eps, rng, mix_constant, start=feasible_loads(g))
    return LoadProfile("resource", tuple(alpha))


def graph_to_profile(g: CongestionGame, rows) -> StrategyProfile:
    return tuple(g.strategy_index(i, r) for i, r in enumerate(rows))


def sample_gibbs_cap(
    g: CongestionGame,
    temperature: float,
    eps: float,
    rng: np.random.Generator,
    weight_mode: str = "mckay",
    mix_constant: float = 4.0,
) -> StrategyProfile:
    k = _require_kuniform(g)
    alpha = sample_load_profile_cap(g, temperature, eps, rng, weight_mode, mix_constant)
    rows = sample_bipartite_uniform(DegreeSequence(k, alpha.counts), rng)
    return graph_to_profile(g, rows)


@dataclass
class CapSampler:
    """Batched two-stage sampler for one (game, temperature, mode)."""

    game: CongestionGame
    temperature: float
    weight_mode: str = "mckay"
    mix_constant: float = 4.0

    def __post_init__(self) -> None:
        self.k = _require_kuniform(self.game)
        self.spec = cap_matroid(self.game)
        self.weight = cap_log_weight(self.game, self.temperature, self.weight_mode)
        self.table = AlphaTable(self.spec, self.weight)
        self.start = feasible_loads(self.game)

    def load_profiles(self, eps: float, size: int, rng: np.random.Generator) -> np.ndarray:
        return sample_polymatroid_bases(
            self.spec, self.weight, eps, size, rng, self.mix_constant, self.start, self.table
        )

    def profiles(self, eps: float, size: int, rng: np.random.Generator) -> np.ndarray:
        alphas = self.load_profiles(eps, size, rng)
        out = np.empty((size, self.game.n), dtype=np.int64)
        for t, a in enumerate(alphas):
            rows = sample_bipartite_uniform(DegreeSequence(self.k, tuple(a)), rng)
            out[t] = graph_to_profile(self.game, rows)
        return out


def sample_gibbs_cap_many(
    g: CongestionGame,
    temperature: float,
    eps: float,
    size: int,
    rng: np.random.Generator,
    weight_mode: str = "mckay",
    mix_constant: float = 4.0,
) -> np.ndarray:
    return CapSampler(g, temperature, weight_mode, mix_constant).profiles(eps, size, rng)


def mckay_condition(k: Sequence[int], u: Sequence[int]) -> bool:
    """k_max * u_max <= K^(1/4), the desk-scale reading of the McKay regime."""
    K = sum(k)
    return max(k) * max(u) <= K**0.25
