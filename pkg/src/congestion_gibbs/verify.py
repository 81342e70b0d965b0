"""Exact oracles, kernel matrices, TV distance, mixing times and structural checks."""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .capacitated import DegreeSequence, exact_bipartite_count, _require_kuniform
from .dynamics import NEG_INF, STEPPERS, conditional_log_weights, log_boltzmann, logsumexp, swap_players
from .game import (
    INF,
    CongestionGame,
    GameError,
    KUniform,
    LoadProfile,
    StrategyProfile,
    deviate,
    is_nash,
    multinomial,
    player_cost,
    potential,
    resource_loads,
    rosenthal_potential,
    strategy_loads,
)
from .matroid import LogWeightFn, MatroidSpec, PolarizedBase, completions, polarized_log_weight

MAX_PROFILES = 10**6
MAX_KERNEL_STATES = 2000
MAX_MIXING_STEPS = 2**30
MAX_CONVEX_DOMAIN = 10**4


class VerificationError(RuntimeError):
    pass


# --- distributions ---------------------------------------------------------


@dataclass
class ExactDistribution:
    support: list
    logp: np.ndarray

    def __post_init__(self) -> None:
        self.logp = np.asarray(self.logp, dtype=float)
        if len(set(self.support)) != len(self.support):
            raise ValueError("support has duplicates")

    @classmethod
    def from_log_weights(cls, support: Sequence, logw: Sequence[float]) -> "ExactDistribution":
        logw = np.asarray(logw, dtype=float)
        z = logsumexp(logw)
        if z == NEG_INF:
            raise ValueError("all weights are zero")
        return cls(list(support), logw - z)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.logp)

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.probs.tolist()))

    def __getitem__(self, state) -> float:
        return self.as_dict().get(state, 0.0)

    def mass(self, states: Iterable) -> float:
        d = self.as_dict()
        return math.fsum(d.get(s, 0.0) for s in states)


def exact_gibbs(g: CongestionGame, temperature: float, max_profiles: int = MAX_PROFILES) -> ExactDistribution:
    """pi(s) = exp(-T Phi(s)) / Z over the feasible profiles."""
    if math.prod(g.num_strategies) > max_profiles:
        raise ValueError(f"profile space exceeds {max_profiles}")
    support, logw = [], []
    for s in g.profiles():
        lw = log_boltzmann(potential(g, s), temperature)
        if lw > NEG_INF:
            support.append(s)
            logw.append(lw)
    if not support:
        raise GameError("game has no feasible profile")
    return ExactDistribution.from_log_weights(support, logw)


def exact_uniform_nash(g: CongestionGame, max_profiles: int = MAX_PROFILES) -> ExactDistribution:
    if math.prod(g.num_strategies) > max_profiles:
        raise ValueError(f"profile space exceeds {max_profiles}")
    ne = [s for s in g.feasible_profiles() if is_nash(g, s)]
    return ExactDistribution.from_log_weights(ne, np.zeros(len(ne)))


def exact_ep_loads(g: CongestionGame, temperature: float) -> ExactDistribution:
    """Stage-one target over strategy loads: (n!/alpha!) exp(-T Phi(alpha))."""
    from .ep import ep_log_weight, ep_matroid

    w = ep_log_weight(g, temperature)
    members = [a for a in ep_matroid(g).polymatroid.members() if w(a) > NEG_INF]
    return ExactDistribution.from_log_weights(members, [w(a) for a in members])


def exact_cap_loads(g: CongestionGame, temperature: float, **guard) -> ExactDistribution:
    """Stage-one target over resource loads: |G(k, alpha)| exp(-T Phi(alpha))."""
    from .capacitated import cap_log_weight, cap_matroid

    w = cap_log_weight(g, temperature, "exact", **guard)
    members = [a for a in cap_matroid(g).polymatroid.members() if w(a) > NEG_INF]
    return ExactDistribution.from_log_weights(members, [w(a) for a in members])


def compose_ep_stages(g: CongestionGame, temperature: float) -> ExactDistribution:
    """Profile law of (exact stage one) then (uniform assignment given alpha)."""
    loads = exact_ep_loads(g, temperature).as_dict()
    support, logp = [], []
    for s in g.profiles():
        a = strategy_loads(g, s).counts
        if a in loads:
            support.append(s)
            logp.append(math.log(loads[a]) - math.log(multinomial(g.n, a)))
    return ExactDistribution(support, np.array(logp))


def compose_cap_stages(g: CongestionGame, temperature: float, **guard) -> ExactDistribution:
    """Profile law of (exact stage one) then (uniform bipartite graph given alpha)."""
    k = _require_kuniform(g)
    loads = exact_cap_loads(g, temperature, **guard).as_dict()
    support, logp = [], []
    for s in g.profiles():
        a = resource_loads(g, s).counts
        if a in loads:
            cnt = exact_bipartite_count(DegreeSequence(k, a), **guard)
            support.append(s)
            logp.append(math.log(loads[a]) - math.log(cnt))
    return ExactDistribution(support, np.array(logp))


def empirical_distribution(samples: Iterable) -> dict:
    """Relative frequencies keyed by state; rows of 2-D arrays become tuples."""
    counts = Counter(tuple(int(x) for x in s) if np.ndim(s) else s for s in samples)
    total = sum(counts.values())
    if total == 0:
        raise ValueError("no samples")
    return {s: c / total for s, c in counts.items()}


def _as_mapping(p) -> Mapping:
    if isinstance(p, ExactDistribution):
        return p.as_dict()
    if isinstance(p, Mapping):
        return p
    arr = np.asarray(p, dtype=float)
    return dict(enumerate(arr.tolist()))


def tv_distance(p, q) -> float:
    """Half the L1 distance; accepts ExactDistribution, dicts, or aligned vectors."""
    p, q = _as_mapping(p), _as_mapping(q)
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def empirical_slack(support_size: int, n_samples: int) -> float:
    """sqrt(|support| / (2N)); 0.02 is used at N = 2e5."""
    return math.sqrt(support_size / (2 * n_samples))


# --- kernels ---------------------------------------------------------------


def _kahan_row_sums(P: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(row) for row in P])


@dataclass
class KernelMatrix:
    states: list
    P: np.ndarray
    pi: np.ndarray

    def __post_init__(self) -> None:
        self.index = {s: k for k, s in enumerate(self.states)}

    @property
    def size(self) -> int:
        return len(self.states)

    def stochasticity_residual(self) -> float:
        return float(np.max(np.abs(_kahan_row_sums(self.P) - 1.0)))

    def reversibility_residual(self) -> float:
        flow = self.pi[:, None] * self.P
        return float(np.max(np.abs(flow - flow.T)))

    def stationarity_residual(self) -> float:
        return float(np.sum(np.abs(self.pi @ self.P - self.pi)))

    def row(self, state) -> np.ndarray:
        return self.P[self.index[state]]


def _guard_states(n: int, limit: int) -> None:
    if n > limit:
        raise ValueError(f"state space of {n} exceeds the kernel guard {limit}")


def logit_kernel(g: CongestionGame, temperature: float, max_states: int = MAX_KERNEL_STATES) -> KernelMatrix:
    pi = exact_gibbs(g, temperature)
    states = pi.support
    _guard_states(len(states), max_states)
    idx = {s: k for k, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for a, s in enumerate(states):
        for i in range(g.n):
            lw = conditional_log_weights(g, s, i, temperature)
            p = np.exp(lw - logsumexp(lw))
            for t, pt in enumerate(p):
                if pt > 0:
                    P[a, idx[deviate(s, i, t)]] += pt / g.n
    return KernelMatrix(states, P, pi.probs)


def relaxed_kernel(g: CongestionGame, temperature: float, max_states: int = MAX_KERNEL_STATES) -> KernelMatrix:
    if not g.is_symmetric:
        raise GameError("relaxed logit dynamics needs a symmetric game")
    base = logit_kernel(g, temperature, max_states)
    swap = np.zeros_like(base.P)
    for a, s in enumerate(base.states):
        for i in range(g.n):
            for j in range(g.n):
                swap[a, base.index[swap_players(s, i, j)]] += 1.0 / g.n**2
    return KernelMatrix(base.states, 0.5 * swap + 0.5 * base.P, base.pi)


def base_exchange_kernel(
    spec: MatroidSpec, w: LogWeightFn, max_states: int = MAX_KERNEL_STATES
) -> KernelMatrix:
    """Kernel of the base-exchange walk on explicit polarized bases of finite weight."""
    d = spec.block_sizes
    states, logw = [], []
    for B in spec.bases():
        pb = PolarizedBase.from_elements(B, len(d))
        lw = polarized_log_weight(w, d, pb)
        if lw > NEG_INF:
            states.append(pb.elements)
            logw.append(lw)
        _guard_states(len(states), max_states)
    idx = {s: k for k, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    r = spec.rank
    for a, B in enumerate(states):
        alpha = PolarizedBase.from_elements(B, len(d)).alpha
        for e in sorted(B):
            rest = B - {e}
            rest_alpha = list(alpha)
            rest_alpha[e[0]] -= 1
            cands, cw = [], []
            for i, copies in enumerate(completions(spec, rest, tuple(rest_alpha))):
                nxt = list(rest_alpha)
                nxt[i] += 1
                lw = polarized_log_weight(w, d, tuple(nxt)) if copies else NEG_INF
                for j in copies:
                    cands.append(rest | {(i, j)})
                    cw.append(lw)
            p = np.exp(np.array(cw) - logsumexp(cw))
            for C, pc in zip(cands, p):
                if pc > 0:
                    P[a, idx[C]] += pc / r
    pi = ExactDistribution.from_log_weights(states, logw)
    return KernelMatrix(states, P, pi.probs)


def lumped_exchange_kernel(spec: MatroidSpec, w: LogWeightFn) -> KernelMatrix:
    """Kernel of alpha(B_t) for the base-exchange walk; stationary law is proportional to w."""
    d = spec.block_sizes
    states = [a for a in spec.polymatroid.members() if w(a) > NEG_INF]
    _guard_states(len(states), MAX_KERNEL_STATES)
    idx = {s: k for k, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    r = spec.rank
    for a, alpha in enumerate(states):
        for i, ai in enumerate(alpha):
            if ai == 0:
                continue
            rest = list(alpha)
            rest[i] -= 1
            cands, cw = [], []
            for k, (b, c) in enumerate(zip(d, spec.caps)):
                if rest[k] + 1 > c:
                    continue
                nxt = list(rest)
                nxt[k] += 1
                lw = polarized_log_weight(w, d, tuple(nxt))
                if lw > NEG_INF:
                    cands.append(tuple(nxt))
                    cw.append(math.log(b - rest[k]) + lw)
            p = np.exp(np.array(cw) - logsumexp(cw))
            for C, pc in zip(cands, p):
                P[a, idx[C]] += pc * ai / r
    pi = ExactDistribution.from_log_weights(states, [w(a) for a in states])
    return KernelMatrix(states, P, pi.probs)


KERNELS: dict[str, Callable[[CongestionGame, float], KernelMatrix]] = {
    "logit": logit_kernel,
    "relaxed": relaxed_kernel,
}


def chain_kernel(g: CongestionGame, stepper: str | Callable, temperature: float) -> KernelMatrix:
    name = stepper if isinstance(stepper, str) else {v: k for k, v in STEPPERS.items()}.get(stepper)
    if name not in KERNELS:
        raise ValueError(f"no kernel for stepper {stepper!r}")
    return KERNELS[name](g, temperature)


# --- mixing time -----------------------------------------------------------


def _tv_vec(v: np.ndarray, pi: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(v - pi)))


def exact_mixing_time(
    K: KernelMatrix, start, eps: float = 0.25, max_steps: int = MAX_MIXING_STEPS
) -> int:
    """Smallest t with TV(P^t(start, .), pi) <= eps.

    TV to stationarity from a fixed start is non-increasing in t, so the first
    crossing is located by doubling and then binary descent over the stored
    powers P^(2^j). The result is confirmed at 2t.
    """
    v = np.zeros(K.size)
    v[K.index[start]] = 1.0
    if _tv_vec(v, K.pi) <= eps:
        return 0
    powers = [K.P]
    t, w = 1, v @ K.P
    while _tv_vec(w, K.pi) > eps:
        if 2 * t > max_steps:
            raise VerificationError(f"no convergence within {max_steps} steps")
        powers.append(powers[-1] @ powers[-1])
        w = v @ powers[-1]
        t *= 2
    # first crossing lies in (t/2, t]; descend from the largest point above eps
    lo, x = t // 2, None
    if lo:
        x = v @ powers[len(powers) - 2]
        for j in range(len(powers) - 3, -1, -1):
            y = x @ powers[j]
            if _tv_vec(y, K.pi) > eps:
                x, lo = y, lo + 2**j
    tau = lo + 1
    end = np.zeros(K.size)
    end[K.index[start]] = 1.0
    for j, bit in enumerate(reversed(bin(2 * tau)[2:])):
        if bit == "1" and j < len(powers):
            end = end @ powers[j]
        elif bit == "1":
            end = end @ np.linalg.matrix_power(K.P, 2**j)
    if _tv_vec(end, K.pi) > eps + 1e-12:
        raise VerificationError("TV rose above eps after the first crossing")
    return tau


def worst_mixing_time(K: KernelMatrix, eps: float = 0.25) -> int:
    return max(exact_mixing_time(K, s, eps) for s in K.states)


def relaxed_mixing_budget(n: int, num_paths: int, temperature: float, phi_max: float, eps: float) -> float:
    """n^3 (ln n + ln ln q + ln(2 T Phi_max / eps^2)) + n^3, both log terms clamped at 0."""
    lnln = max(0.0, math.log(math.log(num_paths))) if num_paths > 1 else 0.0
    arg = 2 * temperature * float(phi_max) / eps**2
    tail = max(0.0, math.log(arg)) if arg > 0 else 0.0
    n3 = n**3
    return n3 * (math.log(n) + lnln + tail) + n3


# --- structural checks -----------------------------------------------------


@dataclass(frozen=True)
class ExchangeResult:
    passed: bool
    witness: tuple | None = None  # (alpha, beta, i)

    def __bool__(self) -> bool:
        return self.passed


def _shift(a: tuple, i: int, j: int) -> tuple:
    out = list(a)
    out[i] -= 1
    out[j] += 1
    return tuple(out)


def check_m_convex(
    f: Callable[[tuple], object] | Mapping,
    domain: Iterable[Sequence[int]],
    tol: float = 0.0,
) -> ExchangeResult:
    """Exchange property: for alpha, beta in dom f and alpha_i > beta_i there is
    j with alpha_j < beta_j and f(a) + f(b) >= f(a - e_i + e_j) + f(b + e_i - e_j).

    Points outside ``domain`` or with f = inf are outside dom f.
    """
    pts = [tuple(a) for a in domain]
    if len(pts) > MAX_CONVEX_DOMAIN:
        raise ValueError(f"domain exceeds {MAX_CONVEX_DOMAIN} points")
    vals = {}
    for a in pts:
        v = f[a] if isinstance(f, Mapping) else f(a)
        if v != INF:
            vals[a] = v

    def val(a):
        return vals.get(a, INF)

    for a in vals:
        for b in vals:
            for i in range(len(a)):
                if a[i] <= b[i]:
                    continue
                ok = False
                for j in range(len(a)):
                    if a[j] >= b[j]:
                        continue
                    lhs = val(_shift(a, i, j))
                    rhs = val(_shift(b, j, i))
                    if lhs == INF or rhs == INF:
                        continue
                    if vals[a] + vals[b] >= lhs + rhs - tol:
                        ok = True
                        break
                if not ok:
                    return ExchangeResult(False, (a, b, i))
    return ExchangeResult(True)


def check_m_concave(nu, domain, tol: float = 0.0) -> ExchangeResult:
    if isinstance(nu, Mapping):
        return check_m_convex({a: -v for a, v in nu.items()}, domain, tol)
    return check_m_convex(lambda a: -nu(a), domain, tol)


def rosenthal_on_loads(g: CongestionGame) -> Callable[[tuple], object]:
    """Strategy-load potential alpha -> Phi(alpha) of a symmetric game."""
    return lambda a: rosenthal_potential(g, LoadProfile("strategy", a))


def check_exact_potential(g: CongestionGame, max_profiles: int = MAX_PROFILES) -> ExchangeResult:
    """Phi(s) - Phi(s') == C_i(s) - C_i(s') for every feasible s and feasible unilateral s'."""
    if math.prod(g.num_strategies) > max_profiles:
        raise ValueError(f"profile space exceeds {max_profiles}")
    for s in g.feasible_profiles():
        phi = potential(g, s)
        for i in range(g.n):
            c = player_cost(g, s, i)
            for t in range(g.num_strategies[i]):
                s2 = deviate(s, i, t)
                phi2 = potential(g, s2)
                if phi2 == INF:
                    continue
                if phi - phi2 != c - player_cost(g, s2, i):
                    return ExchangeResult(False, (s, i, t))
    return ExchangeResult(True)


def nash_set(g: CongestionGame) -> list[StrategyProfile]:
    return [s for s in g.feasible_profiles() if is_nash(g, s)]


def pne_mass_ratio(g: CongestionGame, temperature: float) -> tuple[float, float]:
    """(pi(S \\ NE), pi(NE)) under the Gibbs law at natural-log temperature T."""
    pi = exact_gibbs(g, temperature)
    ne = set(nash_set(g))
    in_ne = math.fsum(p for s, p in pi.as_dict().items() if s in ne)
    return 1.0 - in_ne, in_ne


# --- reports ---------------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    check: str
    instance: str
    value: object
    bound: object
    passed: bool

    def line(self) -> str:
        return f"{self.check}\t{self.instance}\t{_fmt(self.value)}\t{_fmt(self.bound)}\t{'PASS' if self.passed else 'FAIL'}"


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    if isinstance(x, Fraction):
        return str(x)
    return str(x)


def verify_game(g: CongestionGame, instance: str = "game", temperature: float = 1.0) -> list[Finding]:
    """Structural and kernel checks for one enumerable game."""
    out = [Finding("exact-potential", instance, None, None, check_exact_potential(g).passed)]
    kernels = [("logit", logit_kernel)]
    if g.is_symmetric:
        kernels.append(("relaxed", relaxed_kernel))
    for name, build in kernels:
        K = build(g, temperature)
        out.append(Finding(f"{name}-stochastic", instance, K.stochasticity_residual(), 1e-12, K.stochasticity_residual() <= 1e-12))
        out.append(Finding(f"{name}-reversible", instance, K.reversibility_residual(), 1e-10, K.reversibility_residual() <= 1e-10))
        out.append(Finding(f"{name}-stationary", instance, K.stationarity_residual(), 1e-10, K.stationarity_residual() <= 1e-10))
    if g.is_ep:
        from .ep import ep_log_weight, ep_matroid

        res = check_m_convex(rosenthal_on_loads(g), ep_matroid(g).polymatroid.members())
        out.append(Finding("m-convex-potential", instance, res.witness, None, res.passed))
        tv = tv_distance(compose_ep_stages(g, temperature), exact_gibbs(g, temperature))
        out.append(Finding("stage-composition", instance, tv, 1e-10, tv <= 1e-10))
        K = lumped_exchange_kernel(ep_matroid(g), ep_log_weight(g, temperature))
        out.append(Finding("exchange-stationary", instance, K.stationarity_residual(), 1e-10, K.stationarity_residual() <= 1e-10))
    if isinstance(g.structure, KUniform):
        tv = tv_distance(compose_cap_stages(g, temperature), exact_gibbs(g, temperature))
        out.append(Finding("stage-composition", instance, tv, 1e-10, tv <= 1e-10))
    return out


def search_series_violation(n: int = 2, max_cost: int = 2) -> tuple[list, ExchangeResult] | None:
    """First cost assignment (in lexicographic order) on two 2-parallel gadgets in
    series whose strategy-load potential fails the exchange check."""
    from .game import compositions
    from .instances import series_gadget_game

    tables = [
        t for t in itertools.product(range(max_cost + 1), repeat=n)
        if all(a <= b for a, b in zip(t, t[1:]))
    ]
    for costs in itertools.product(tables, repeat=4):
        g = series_gadget_game(costs, n)
        res = check_m_convex(rosenthal_on_loads(g), compositions(n, 4))
        if not res.passed:
            return list(costs), res
    return None
