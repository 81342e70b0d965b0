"""Logit and relaxed logit dynamics, and the shared weighted index sampler."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .game import INF, CongestionGame, GameError, StrategyProfile, potential

NEG_INF = -math.inf


def log_boltzmann(phi, temperature: float) -> float:
    """-T * phi in natural-log domain; -inf for infinite potential at any T."""
    if phi == INF:
        return NEG_INF
    return -temperature * float(phi)


def logsumexp(a) -> float:
    a = np.asarray(a, dtype=float)
    top = np.max(a)
    if top == NEG_INF:
        return NEG_INF
    return float(top + np.log(np.sum(np.exp(a - top))))


def normalized_probs(q: Sequence[float], a: Sequence[float]) -> np.ndarray:
    """Probabilities q_i e^{a_i} / sum_j q_j e^{a_j}, evaluated in log domain."""
    q = np.asarray(q, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(q < 0):
        raise ValueError("suitable probabilities need q_i >= 0")
    with np.errstate(divide="ignore"):
        logits = np.where(q > 0, np.log(q) + a, NEG_INF)
    total = logsumexp(logits)
    if total == NEG_INF:
        raise ValueError("all effective weights are zero")
    return np.exp(logits - total)


def suitable_sample(q: Sequence[float], a: Sequence[float], rng: np.random.Generator) -> int:
    """Draw index i with probability proportional to q_i * exp(a_i).

    Weights are shifted by the largest finite logit before exponentiating.
    """
    if isinstance(q, np.ndarray):
        q = q.tolist()
    if isinstance(a, np.ndarray):
        a = a.tolist()
    top = NEG_INF
    for qi, ai in zip(q, a):
        if qi < 0:
            raise ValueError("suitable probabilities need q_i >= 0")
        if qi > 0 and ai > top:
            top = ai
    if top == NEG_INF:
        raise ValueError("all effective weights are zero")
    w = [qi * math.exp(ai - top) if qi > 0 and ai > NEG_INF else 0.0 for qi, ai in zip(q, a)]
    x = rng.random() * math.fsum(w)
    last = 0
    for i, wi in enumerate(w):
        if wi > 0:
            last = i
            if x < wi:
                return i
            x -= wi
    # u * total can round up to total; fall back to the last positive entry
    return last


@dataclass(frozen=True)
class ChainConfig:
    temperature: float
    seed: int = 0
    budget: int = 0
    thin: int = 0  # record every `thin` steps; 0 records only the final state

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.budget < 0:
            raise ValueError(f"budget must be >= 0, got {self.budget}")


@dataclass(frozen=True)
class ChainState:
    profile: StrategyProfile
    steps: int = 0


@dataclass
class ChainTrace:
    config: ChainConfig
    final: ChainState
    samples: list[StrategyProfile] = field(default_factory=list)


def conditional_log_weights(
    g: CongestionGame, s: StrategyProfile, i: int, temperature: float
) -> np.ndarray:
    """Log-weights -T*Phi(t, s_{-i}) for every strategy t of player i.

    Shifted by the constant -T*Phi(s_{-i}), which cancels on normalisation.
    """
    pref, sets = g.float_prefix, g.strategy_tuples
    loads = [0] * g.m
    for p, j in enumerate(s):
        if p != i:
            for e in sets[p][j]:
                loads[e] += 1
    out = np.empty(len(sets[i]))
    for t, S in enumerate(sets[i]):
        inc = 0.0
        for e in S:
            inc += pref[e][loads[e] + 1] - pref[e][loads[e]] if loads[e] + 1 <= g.n else INF
        if inc == INF or math.isnan(inc):
            out[t] = NEG_INF
        else:
            out[t] = -temperature * inc
    return out


def logit_step(
    g: CongestionGame, state: ChainState, temperature: float, rng: np.random.Generator
) -> ChainState:
    """Pick a uniform player and resample that player's strategy by the logit rule."""
    i = int(rng.integers(g.n))
    a = conditional_log_weights(g, state.profile, i, temperature)
    t = suitable_sample(np.ones_like(a), a, rng)
    prof = state.profile[:i] + (t,) + state.profile[i + 1 :]
    return ChainState(prof, state.steps + 1)


def swap_players(s: StrategyProfile, i: int, j: int) -> StrategyProfile:
    out = list(s)
    out[i], out[j] = s[j], s[i]
    return tuple(out)


def relaxed_logit_step(
    g: CongestionGame, state: ChainState, temperature: float, rng: np.random.Generator
) -> ChainState:
    """With probability 1/2 swap the strategies of an ordered uniform pair, else a logit step."""
    if not g.is_symmetric:
        raise GameError("relaxed logit dynamics needs a symmetric game")
    if rng.random() < 0.5:
        i, j = (int(x) for x in rng.integers(g.n, size=2))
        prof = swap_players(state.profile, i, j)
        return ChainState(prof, state.steps + 1)
    return logit_step(g, state, temperature, rng)


Stepper = Callable[[CongestionGame, ChainState, float, np.random.Generator], ChainState]

STEPPERS: dict[str, Stepper] = {"logit": logit_step, "relaxed": relaxed_logit_step}


def run_chain(
    g: CongestionGame,
    config: ChainConfig,
    stepper: Stepper | str = relaxed_logit_step,
    start: StrategyProfile | None = None,
) -> ChainTrace:
    """Run ``stepper`` for ``config.budget`` steps from ``start`` (default: a feasible profile)."""
    if isinstance(stepper, str):
        stepper = STEPPERS[stepper]
    rng = np.random.default_rng(config.seed)
    prof = start if start is not None else g.feasible_profile()
    g.validate(prof)
    if potential(g, prof) == INF:
        raise GameError("chain start must be feasible")
    state = ChainState(tuple(prof))
    trace = ChainTrace(config, state)
    for _ in range(config.budget):
        state = stepper(g, state, config.temperature, rng)
        if config.thin and state.steps % config.thin == 0:
            trace.samples.append(state.profile)
    trace.final = state
    if not config.thin:
        trace.samples.append(state.profile)
    return trace


def with_budget(config: ChainConfig, budget: int) -> ChainConfig:
    return replace(config, budget=budget)
