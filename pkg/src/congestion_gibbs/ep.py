"""Two-stage Gibbs sampling for extension-parallel games, and uniform PNE sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import NEG_INF, log_boltzmann
from .game import (
    CongestionGame,
    GameError,
    LoadProfile,
    StrategyProfile,
    potential,
    rosenthal_potential,
    min_potential_profile,
)
from .matroid import (
    AlphaTable,
    LogWeightFn,
    MatroidSpec,
    sample_polymatroid_base,
    sample_polymatroid_bases,
)

LN2 = math.log(2.0)


class SamplingError(RuntimeError):
    pass


def _require_ep(g: CongestionGame) -> None:
    if not g.is_ep:
        raise GameError("this sampler needs an extension-parallel game")


def log_factorial(k: int) -> float:
    return math.lgamma(k + 1)


def ep_log_weight(g: CongestionGame, temperature: float) -> LogWeightFn:
    """alpha -> log(n!/alpha!) - T * Phi(alpha) over strategy load profiles."""
    _require_ep(g)
    lf_n = log_factorial(g.n)

    def f(alpha):
        phi = rosenthal_potential(g, LoadProfile("strategy", alpha))
        lw = log_boltzmann(phi, temperature)
        if lw == NEG_INF:
            return NEG_INF
        return lf_n - sum(log_factorial(a) for a in alpha) + lw

    return LogWeightFn(f, name=f"ep(T={temperature})")


def ep_matroid(g: CongestionGame) -> MatroidSpec:
    """n-uniform matroid on {(path p, copy j) : j < n}."""
    q = len(g.paths)
    return MatroidSpec.uniform(g.n, (g.n,) * q)


@dataclass
class EPSampler:
    """Reusable stage-one machinery for one (game, temperature) pair."""

    game: CongestionGame
    temperature: float
    mix_constant: float = 4.0

    def __post_init__(self) -> None:
        _require_ep(self.game)
        self.spec = ep_matroid(self.game)
        self.weight = ep_log_weight(self.game, self.temperature)
        self._table: AlphaTable | None = None

    @property
    def table(self) -> AlphaTable:
        if self._table is None:
            self._table = AlphaTable(self.spec, self.weight)
        return self._table

    def load_profiles(self, eps: float, size: int, rng: np.random.Generator) -> np.ndarray:
        return sample_polymatroid_bases(
            self.spec, self.weight, eps, size, rng, self.mix_constant, table=self.table
        )

    def profiles(self, eps: float, size: int, rng: np.random.Generator) -> np.ndarray:
        alphas = self.load_profiles(eps, size, rng)
        return assign_players_batch(alphas, rng)


def sample_load_profile_ep(
    g: CongestionGame,
    temperature: float,
    eps: float,
    rng: np.random.Generator,
    mix_constant: float = 4.0,
) -> LoadProfile:
    """Approximate draw from pi'(alpha) ~ (n!/alpha!) exp(-T Phi(alpha))."""
    _require_ep(g)
    alpha = sample_polymatroid_base(
        ep_matroid(g), ep_log_weight(g, temperature), eps, rng, mix_constant
    )
    return LoadProfile("strategy", tuple(alpha))


def assign_players_uniform(alpha, rng: np.random.Generator) -> StrategyProfile:
    """Uniform profile with strategy loads alpha via a Fisher-Yates permutation.

    Players mu(1..alpha_1) take strategy 0, the next alpha_2 strategy 1, ...
    """
    counts = alpha.counts if isinstance(alpha, LoadProfile) else tuple(alpha)
    n = sum(counts)
    perm = list(range(n))
    for k in range(n - 1, 0, -1):
        j = int(rng.integers(k + 1))
        perm[k], perm[j] = perm[j], perm[k]
    prof = [0] * n
    pos = 0
    for p, a in enumerate(counts):
        for _ in range(a):
            prof[perm[pos]] = p
            pos += 1
    return tuple(prof)


def assign_players_batch(alphas: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise ``assign_players_uniform`` for an (N, q) array of load profiles."""
    alphas = np.asarray(alphas, dtype=np.int64)
    N, _ = alphas.shape
    n = int(alphas[0].sum()) if N else 0
    cum = np.cumsum(alphas, axis=1)
    slots = np.arange(n)
    sorted_prof = (cum[:, None, :] <= slots[None, :, None]).sum(axis=2)
    return rng.permuted(sorted_prof, axis=1)


def sample_gibbs_ep(
    g: CongestionGame,
    temperature: float,
    eps: float,
    rng: np.random.Generator,
    mix_constant: float = 4.0,
) -> StrategyProfile:
    """One profile from a distribution eps-close to the Gibbs distribution."""
    alpha = sample_load_profile_ep(g, temperature, eps, rng, mix_constant)
    return assign_players_uniform(alpha, rng)


def sample_gibbs_ep_many(
    g: CongestionGame,
    temperature: float,
    eps: float,
    size: int,
    rng: np.random.Generator,
    mix_constant: float = 4.0,
) -> np.ndarray:
    """``size`` independent Gibbs samples as an (size, n) array of path indices."""
    return EPSampler(g, temperature, mix_constant).profiles(eps, size, rng)


def pne_temperature(n: int, q: int, eps: float) -> int:
    """Base-2 temperature ceil(n log2 q + log2(2/eps))."""
    return math.ceil(n * math.log2(q) + math.log2(2 / eps))


def rerun_cap(eps: float) -> int:
    return 64 * math.ceil(1 / (1 - eps / 2))


@dataclass
class PNEResult:
    profiles: np.ndarray
    reruns: np.ndarray
    temperature: int
    phi_min: object


def sample_uniform_pne_many(
    g: CongestionGame,
    eps: float,
    size: int,
    rng: np.random.Generator,
    mix_constant: float = 4.0,
) -> PNEResult:
    """Approximately uniform pure Nash equilibria by rejection at a high base-2 temperature.

    Costs must be integers so that every non-equilibrium profile has
    potential at least phi_min + 1.
    """
    _require_ep(g)
    if any(v.denominator != 1 for c in g.resources for v in c.values):
        raise GameError("uniform PNE sampling needs integer-valued costs")
    phi_min = potential(g, min_potential_profile(g))
    T2 = pne_temperature(g.n, len(g.paths), eps)
    sampler = EPSampler(g, T2 * LN2, mix_constant)
    out = np.empty((size, g.n), dtype=np.int64)
    reruns = np.zeros(size, dtype=np.int64)
    pending = np.arange(size)
    cap = rerun_cap(eps)
    phi_cache: dict[tuple, object] = {}
    for _ in range(cap):
        if pending.size == 0:
            break
        alphas = sampler.load_profiles(eps / 2, pending.size, rng)
        keep = np.empty(pending.size, dtype=bool)
        for k, a in enumerate(map(tuple, alphas)):
            phi = phi_cache.get(a)
            if phi is None:
                phi = phi_cache[a] = rosenthal_potential(g, LoadProfile("strategy", a))
            keep[k] = phi == phi_min
        profs = assign_players_batch(alphas[keep], rng)
        out[pending[keep]] = profs
        reruns[pending] += 1
        pending = pending[~keep]
    if pending.size:
        raise SamplingError(f"{pending.size} samples found no equilibrium within {cap} runs")
    return PNEResult(out, reruns, T2, phi_min)


def sample_uniform_pne(
    g: CongestionGame, eps: float, rng: np.random.Generator, mix_constant: float = 4.0
) -> StrategyProfile:
    res = sample_uniform_pne_many(g, eps, 1, rng, mix_constant)
    return tuple(int(x) for x in res.profiles[0])

