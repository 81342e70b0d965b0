"""Polymatroid-to-matroid polarization and the base-exchange Markov chain.

A polymatroid base alpha in Z^q is lifted to bases of a truncated partition
matroid on ground set {(i, j) : j < block_sizes[i]}; the weight w(alpha) is
spread evenly over the binom(d, alpha) lifts. Because the lifted weights
depend on alpha(B) only, the projected process alpha(B_t) is itself Markov,
which the batch sampler exploits.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np

from .dynamics import NEG_INF, suitable_sample
from .game import compositions

Alpha = tuple  # tuple[int, ...]


def multichoose(d, alpha: Sequence[int]) -> int:
    """prod_i binom(d_i, alpha_i); ``d`` is an int or per-coordinate sequence."""
    ds = [d] * len(alpha) if isinstance(d, int) else list(d)
    out = 1
    for di, a in zip(ds, alpha):
        if not 0 <= a <= di:
            raise ValueError(f"need 0 <= alpha_i <= d_i, got alpha={list(alpha)}, d={ds}")
        out *= math.comb(di, a)
    return out


def log_multichoose(d, alpha: Sequence[int]) -> float:
    return math.log(multichoose(d, alpha))


@dataclass(frozen=True)
class PolymatroidBaseSet:
    """{alpha in Z^q : 0 <= alpha <= caps, |alpha| = modulus}."""

    caps: tuple[int, ...]
    modulus: int

    @property
    def dimension(self) -> int:
        return len(self.caps)

    def __contains__(self, alpha) -> bool:
        return (
            len(alpha) == len(self.caps)
            and sum(alpha) == self.modulus
            and all(0 <= a <= c for a, c in zip(alpha, self.caps))
        )

    def members(self) -> Iterator[Alpha]:
        return compositions(self.modulus, len(self.caps), self.caps)

    def greedy_member(self) -> Alpha | None:
        """Fill coordinates left to right up to their caps."""
        left, out = self.modulus, []
        for c in self.caps:
            take = min(c, left)
            out.append(take)
            left -= take
        return tuple(out) if left == 0 else None


@dataclass(frozen=True)
class MatroidSpec:
    """Truncated partition matroid: |A & E_i| <= caps[i] and |A| <= rank.

    Block E_i holds ``block_sizes[i]`` copies of coordinate i. A uniform
    matroid is the special case caps == block_sizes.
    """

    block_sizes: tuple[int, ...]
    caps: tuple[int, ...]
    rank: int

    def __post_init__(self) -> None:
        if len(self.block_sizes) != len(self.caps):
            raise ValueError("block_sizes and caps differ in length")
        reachable = sum(min(b, c) for b, c in zip(self.block_sizes, self.caps))
        if not 0 <= self.rank <= reachable:
            raise ValueError(f"rank {self.rank} exceeds the partition rank {reachable}")

    @classmethod
    def uniform(cls, rank: int, block_sizes: Sequence[int]) -> "MatroidSpec":
        return cls(tuple(block_sizes), tuple(block_sizes), rank)

    @classmethod
    def truncated_partition(cls, block_sizes, caps, rank: int) -> "MatroidSpec":
        return cls(tuple(block_sizes), tuple(caps), rank)

    @property
    def ground_set(self) -> list[tuple[int, int]]:
        return [(i, j) for i, b in enumerate(self.block_sizes) for j in range(b)]

    def is_independent(self, A) -> bool:
        if len(A) > self.rank:
            return False
        counts = [0] * len(self.caps)
        for i, j in A:
            if not 0 <= j < self.block_sizes[i]:
                return False
            counts[i] += 1
        return all(c <= u for c, u in zip(counts, self.caps))

    def is_base(self, A) -> bool:
        return len(A) == self.rank and self.is_independent(A)

    @cached_property
    def polymatroid(self) -> PolymatroidBaseSet:
        return PolymatroidBaseSet(
            tuple(min(b, c) for b, c in zip(self.block_sizes, self.caps)), self.rank
        )

    def bases(self) -> Iterator[frozenset]:
        for alpha in self.polymatroid.members():
            blocks = [itertools.combinations(range(b), a) for b, a in zip(self.block_sizes, alpha)]
            for pick in itertools.product(*blocks):
                yield frozenset((i, j) for i, js in enumerate(pick) for j in js)


class LogWeightFn:
    """alpha -> log w(alpha), with -inf marking points outside the effective domain."""

    def __init__(self, func: Callable[[Alpha], float], name: str = "") -> None:
        self._func = func
        self._cache: dict[Alpha, float] = {}
        self.name = name

    def __call__(self, alpha) -> float:
        alpha = tuple(int(a) for a in alpha)
        v = self._cache.get(alpha)
        if v is None:
            v = float(self._func(alpha))
            self._cache[alpha] = v
        return v

    def polarized(self, d) -> "LogWeightFn":
        """Log-weight of a single lifted base: log w(alpha) - log binom(d, alpha)."""
        return LogWeightFn(lambda a: polarized_log_weight(self, d, a), name=f"{self.name}|pol")


@dataclass(frozen=True)
class PolarizedBase:
    elements: frozenset
    alpha: Alpha = field(compare=False)

    @classmethod
    def from_elements(cls, elements, dimension: int) -> "PolarizedBase":
        els = frozenset(elements)
        return cls(els, projection(els, dimension))


def projection(elements, dimension: int) -> Alpha:
    out = [0] * dimension
    for i, _ in elements:
        out[i] += 1
    return tuple(out)


def polarized_log_weight(w: LogWeightFn, d, B) -> float:
    """log w(alpha(B)) - log binom(d, alpha(B)); accepts a PolarizedBase or a bare alpha."""
    alpha = B.alpha if isinstance(B, PolarizedBase) else tuple(B)
    lw = w(alpha)
    if lw == NEG_INF:
        return NEG_INF
    return lw - log_multichoose(d, alpha)


def completions(spec: MatroidSpec, rest, rest_alpha: Alpha):
    """Per block: the free copies that complete ``rest`` to a base."""
    used = [set() for _ in spec.block_sizes]
    for i, j in rest:
        used[i].add(j)
    out = []
    for i, (b, c) in enumerate(zip(spec.block_sizes, spec.caps)):
        if rest_alpha[i] + 1 > c:
            out.append([])
        else:
            out.append([j for j in range(b) if j not in used[i]])
    return out


def base_exchange_step(
    spec: MatroidSpec, w_pol: LogWeightFn, B: PolarizedBase, rng: np.random.Generator
) -> PolarizedBase:
    """Drop a uniform element of B, re-add one with probability proportional to w_pol.

    Completions are grouped by block: all free copies of block i give the
    same alpha, so the block is drawn with weight (#free copies) * w_pol and
    the copy uniformly within it. Re-adding the removed element is allowed.
    """
    elems = sorted(B.elements)
    e = elems[int(rng.integers(len(elems)))]
    rest = B.elements - {e}
    rest_alpha = list(B.alpha)
    rest_alpha[e[0]] -= 1
    free = completions(spec, rest, tuple(rest_alpha))
    q, a = [], []
    for i, copies in enumerate(free):
        if copies:
            nxt = rest_alpha.copy()
            nxt[i] += 1
            q.append(len(copies))
            a.append(w_pol(nxt))
        else:
            q.append(0)
            a.append(NEG_INF)
    i = suitable_sample(q, a, rng)
    j = free[i][int(rng.integers(len(free[i])))]
    rest_alpha[i] += 1
    return PolarizedBase(rest | {(i, j)}, tuple(rest_alpha))


def step_budget(rank: int, eps: float, mix_constant: float = 4.0) -> int:
    """ceil(C * r * (ln r + ln(1/eps)) + C * r) base-exchange steps."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if rank <= 0:
        return 0
    return math.ceil(mix_constant * rank * (math.log(rank) + math.log(1 / eps)) + mix_constant * rank)


def initial_alpha(spec: MatroidSpec, w: LogWeightFn, start: Alpha | None = None) -> Alpha:
    """A finite-weight polymatroid base: ``start``, else greedy, else the first in lexicographic order."""
    pm = spec.polymatroid
    if start is not None:
        if tuple(start) not in pm or w(start) == NEG_INF:
            raise ValueError(f"start {tuple(start)} is not a finite-weight base")
        return tuple(start)
    g = pm.greedy_member()
    if g is not None and w(g) > NEG_INF:
        return g
    for alpha in pm.members():
        if w(alpha) > NEG_INF:
            return alpha
    raise ValueError("no polymatroid base has finite weight")


def initial_base(spec: MatroidSpec, alpha: Alpha) -> PolarizedBase:
    return PolarizedBase(
        frozenset((i, j) for i, a in enumerate(alpha) for j in range(a)), tuple(alpha)
    )


def sample_polymatroid_base(
    spec: MatroidSpec,
    w: LogWeightFn,
    eps: float,
    rng: np.random.Generator,
    mix_constant: float = 4.0,
    start: Alpha | None = None,
) -> Alpha:
    """One approximate sample alpha ~ w over the polymatroid bases of ``spec``.

    Runs the explicit base-exchange chain on the polarized matroid for
    ``step_budget(rank, eps)`` steps and projects the final base.
    """
    w_pol = w.polarized(spec.block_sizes)
    B = initial_base(spec, initial_alpha(spec, w, start))
    for _ in range(step_budget(spec.rank, eps, mix_constant)):
        B = base_exchange_step(spec, w_pol, B, rng)
    return B.alpha


class AlphaTable:
    """Dense lookup of polarized log-weights over the polymatroid bases."""

    def __init__(self, spec: MatroidSpec, w: LogWeightFn) -> None:
        pm = spec.polymatroid
        self.caps = np.array(pm.caps, dtype=np.int64)
        radix = np.ones(len(pm.caps), dtype=np.int64)
        for i in range(1, len(pm.caps)):
            radix[i] = radix[i - 1] * (pm.caps[i - 1] + 1)
        if float(np.prod(self.caps + 1.0)) > 2**62:
            raise ValueError("polymatroid box too large for integer encoding")
        self.radix = radix
        members = list(pm.members())
        codes = np.array([int(np.dot(a, radix)) for a in members], dtype=np.int64)
        order = np.argsort(codes)
        self.codes = codes[order]
        w_pol = w.polarized(spec.block_sizes)
        self.logw = np.array([w_pol(members[k]) for k in order], dtype=float)

    def lookup(self, codes: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.codes, codes)
        idx = np.clip(idx, 0, len(self.codes) - 1)
        hit = self.codes[idx] == codes
        return np.where(hit, self.logw[idx], NEG_INF)


def batch_exchange_steps(
    spec: MatroidSpec,
    table: AlphaTable,
    alpha: np.ndarray,
    steps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Advance many independent chains, tracking alpha(B) only.

    Same transition law on alpha as ``base_exchange_step``: remove from block
    i with probability alpha_i / r, re-add to block i' with weight
    (block_size - alpha'_i') * w_pol(alpha' + e_i').
    """
    alpha = np.array(alpha, dtype=np.int64, copy=True)
    N, q = alpha.shape
    r = spec.rank
    if r == 0 or N == 0:
        return alpha
    rows = np.arange(N)
    sizes = np.array(spec.block_sizes, dtype=np.int64)
    caps = table.caps
    radix = table.radix
    for _ in range(steps):
        u = rng.random(N) * r
        cum = np.cumsum(alpha, axis=1)
        drop = (cum <= u[:, None]).sum(axis=1)
        alpha[rows, drop] -= 1
        base = alpha @ radix
        cand = base[:, None] + radix[None, :]
        free = sizes[None, :] - alpha
        ok = alpha < caps[None, :]
        logits = np.full((N, q), NEG_INF)
        lw = table.lookup(cand[ok])
        logits[ok] = np.log(free[ok]) + lw
        top = logits.max(axis=1, keepdims=True)
        p = np.exp(logits - top)
        cp = np.cumsum(p, axis=1)
        x = rng.random(N) * cp[:, -1]
        pick = (cp <= x[:, None]).sum(axis=1)
        pick = np.minimum(pick, q - 1)
        # guard the rounding edge: never land on a zero-probability block
        bad = p[rows, pick] == 0
        if bad.any():
            pick[bad] = np.argmax(p[bad], axis=1)
        alpha[rows, pick] += 1
    return alpha


def sample_polymatroid_bases(
    spec: MatroidSpec,
    w: LogWeightFn,
    eps: float,
    size: int,
    rng: np.random.Generator,
    mix_constant: float = 4.0,
    start: Alpha | None = None,
    table: AlphaTable | None = None,
) -> np.ndarray:
    """``size`` independent chain outputs, as an int array of shape (size, q)."""
    a0 = initial_alpha(spec, w, start)
    table = table or AlphaTable(spec, w)
    alpha = np.tile(np.array(a0, dtype=np.int64), (size, 1))
    return batch_exchange_steps(spec, table, alpha, step_budget(spec.rank, eps, mix_constant), rng)
