"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import io
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .capacitated import (
    CapSampler,
    DegreeSequence,
    McKayTerms,
    exact_bipartite_count,
    mckay_estimate,
)
from .dynamics import STEPPERS, ChainConfig, run_chain
from .ep import EPSampler, SamplingError, pne_temperature, sample_uniform_pne_many
from .game import CongestionGame, GameError, KUniform, potential_extremes
from .gamefile import load_game
from .matroid import step_budget
from .verify import (
    exact_mixing_time,
    logit_kernel,
    relaxed_kernel,
    relaxed_mixing_budget,
    verify_game,
)

DEFAULT_SEED = 20240601
CHUNK = 4096


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise InputError(message)


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    game: str | None
    temperature: float
    eps: float | None
    samples: int
    seed: int
    weight_mode: str
    out: str | None

    def __post_init__(self) -> None:
        if self.eps is not None and not 0 < self.eps < 1:
            raise InputError(f"--eps must lie in (0, 1), got {self.eps}")
        if self.samples < 1:
            raise InputError(f"--n must be >= 1, got {self.samples}")
        if self.temperature < 0:
            raise InputError(f"--T must be >= 0, got {self.temperature}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="congestion-gibbs", description="Gibbs sampling for congestion games.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, T=True, eps=None, n=False):
        sp.add_argument("--game", required=True, help="game file")
        if T:
            sp.add_argument("--T", type=float, default=1.0, help="temperature (default 1)")
        if eps is not None:
            sp.add_argument("--eps", type=float, default=eps, help=f"tolerance (default {eps})")
        if n:
            sp.add_argument("--n", type=int, default=1000, help="number of samples (default 1000)")
            sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
            sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--timing", action="store_true", help="print seconds per step to stderr")

    sp = sub.add_parser("sample-gibbs", help="approximate Gibbs samples")
    common(sp, eps=0.01, n=True)
    sp.add_argument("--mix-constant", type=float, default=4.0)
    sp.add_argument("--mode", choices=("mckay", "exact"), default="mckay")

    sp = sub.add_parser("sample-pne", help="approximately uniform pure Nash equilibria")
    common(sp, T=False, eps=0.05, n=True)
    sp.add_argument("--mix-constant", type=float, default=4.0)

    sp = sub.add_parser("run-dynamics", help="final states of independent logit chains")
    common(sp, n=True)
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--dynamics", choices=sorted(STEPPERS), default="relaxed")

    sp = sub.add_parser("verify", help="exact structural and kernel checks")
    common(sp)

    sp = sub.add_parser("mixing", help="exact mixing time from every start state")
    common(sp, eps=0.25)
    sp.add_argument("--dynamics", choices=sorted(STEPPERS), default="relaxed")

    for name, hlp in (("count-bipartite", "exact bipartite count"), ("mckay", "McKay estimate")):
        sp = sub.add_parser(name, help=hlp)
        sp.add_argument("--k", type=_int_list, required=True)
        sp.add_argument("--alpha", type=_int_list, required=True)
        sp.add_argument("--max-rows", type=int, default=12)
        sp.add_argument("--max-cells", type=int, default=120)
        sp.add_argument("--out")
    return p


# --- helpers ---------------------------------------------------------------


def _chunks(total: int) -> list[int]:
    sizes = [CHUNK] * (total // CHUNK)
    if total % CHUNK:
        sizes.append(total % CHUNK)
    return sizes


def _fan_out(work: Callable[[int, np.random.Generator], np.ndarray], total: int, seed: int, threads: int) -> np.ndarray:
    """Run ``work(size, rng)`` per fixed-size chunk; results depend only on seed."""
    sizes = _chunks(total)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(s, np.random.default_rng(q)) for s, q in zip(sizes, seqs)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda j: work(*j), jobs))
    else:
        parts = [work(*j) for j in jobs]
    return np.concatenate(parts, axis=0)


def _strategy_label(g: CongestionGame, i: int, j: int) -> str:
    names = g.resource_names or tuple(str(e) for e in range(g.m))
    if g.is_ep:
        return str(j)
    return "+".join(names[e] for e in sorted(g.strategy_sets[i][j]))


def _write_csv(out, meta: dict, g: CongestionGame, profiles: np.ndarray) -> None:
    for k, v in meta.items():
        out.write(f"# {k}={v}\n")
    if g.is_ep:
        names = g.resource_names or tuple(str(e) for e in range(g.m))
        for j, path in enumerate(g.paths):
            out.write(f"# path {j}={'+'.join(names[e] for e in sorted(path))}\n")
    out.write("sample," + ",".join(f"player{i}" for i in range(g.n)) + "\n")
    for t, row in enumerate(profiles):
        out.write(f"{t}," + ",".join(_strategy_label(g, i, int(j)) for i, j in enumerate(row)) + "\n")


def _timing(args, seconds: float, steps: int) -> None:
    if getattr(args, "timing", False) and steps:
        print(f"seconds/step={seconds / steps:.3e} steps={steps}", file=sys.stderr)


# --- commands --------------------------------------------------------------


def cmd_sample_gibbs(args, out) -> int:
    g = load_game(args.game)
    cfg = ExperimentConfig(args.command, args.game, args.T, args.eps, args.n, args.seed, args.mode, args.out)
    if g.is_ep:
        sampler = EPSampler(g, cfg.temperature, args.mix_constant)
        sampler.table  # build once before any fan-out
        mode = "ep"
    elif isinstance(g.structure, KUniform):
        sampler = CapSampler(g, cfg.temperature, cfg.weight_mode, args.mix_constant)
        mode = cfg.weight_mode
    else:
        raise GameError("sample-gibbs needs an extension-parallel or k-uniform game")
    steps = step_budget(sampler.spec.rank, cfg.eps, args.mix_constant)
    t0 = time.perf_counter()
    profiles = _fan_out(lambda size, rng: sampler.profiles(cfg.eps, size, rng), cfg.samples, cfg.seed, args.threads)
    _timing(args, time.perf_counter() - t0, steps * cfg.samples)
    meta = {
        "command": cfg.command, "seed": cfg.seed, "T": cfg.temperature, "eps": cfg.eps,
        "n": cfg.samples, "mode": mode, "mix_constant": args.mix_constant,
        "steps_per_sample": steps,
    }
    _write_csv(out, meta, g, profiles)
    return 0


def cmd_sample_pne(args, out) -> int:
    g = load_game(args.game)
    cfg = ExperimentConfig(args.command, args.game, 0.0, args.eps, args.n, args.seed, "ep", args.out)
    results = []

    def work(size, rng):
        res = sample_uniform_pne_many(g, cfg.eps, size, rng, args.mix_constant)
        results.append(res)
        return np.concatenate([res.profiles, res.reruns[:, None]], axis=1)

    t0 = time.perf_counter()
    both = _fan_out(work, cfg.samples, cfg.seed, args.threads)
    profiles, reruns = both[:, :-1], both[:, -1]
    T2 = pne_temperature(g.n, len(g.paths), cfg.eps)
    steps = step_budget(g.n, cfg.eps / 2, args.mix_constant)
    _timing(args, time.perf_counter() - t0, steps * int(reruns.sum()))
    meta = {
        "command": cfg.command, "seed": cfg.seed, "eps": cfg.eps, "n": cfg.samples,
        "T_base2": T2, "T": T2 * math.log(2), "phi_min": results[0].phi_min,
        "mix_constant": args.mix_constant, "steps_per_run": steps,
        "total_runs": int(reruns.sum()),
    }
    _write_csv(out, meta, g, profiles)
    return 0


def cmd_run_dynamics(args, out) -> int:
    g = load_game(args.game)
    cfg = ExperimentConfig(args.command, args.game, args.T, None, args.n, args.seed, args.dynamics, args.out)
    if args.steps < 0:
        raise InputError("--steps must be >= 0")
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.samples)

    def one(q):
        c = ChainConfig(cfg.temperature, int(q.generate_state(1, np.uint64)[0]), args.steps)
        return run_chain(g, c, args.dynamics).final.profile

    t0 = time.perf_counter()
    if args.threads > 1:
        with ThreadPoolExecutor(args.threads) as pool:
            finals = list(pool.map(one, seeds))
    else:
        finals = [one(q) for q in seeds]
    _timing(args, time.perf_counter() - t0, args.steps * cfg.samples)
    meta = {
        "command": cfg.command, "seed": cfg.seed, "T": cfg.temperature, "n": cfg.samples,
        "dynamics": args.dynamics, "steps": args.steps,
    }
    _write_csv(out, meta, g, np.array(finals, dtype=np.int64).reshape(cfg.samples, g.n))
    return 0


def cmd_verify(args, out) -> int:
    g = load_game(args.game)
    findings = verify_game(g, args.game, args.T)
    out.write("check\tinstance\tvalue\tbound\tresult\n")
    for f in findings:
        out.write(f.line() + "\n")
    return 0 if all(f.passed for f in findings) else 2


def cmd_mixing(args, out) -> int:
    g = load_game(args.game)
    if not 0 < args.eps < 1:
        raise InputError(f"--eps must lie in (0, 1), got {args.eps}")
    K = (relaxed_kernel if args.dynamics == "relaxed" else logit_kernel)(g, args.T)
    taus = {s: exact_mixing_time(K, s, args.eps) for s in K.states}
    budget = None
    if args.dynamics == "relaxed" and g.is_ep:
        budget = relaxed_mixing_budget(g.n, len(g.paths), args.T, float(potential_extremes(g)[1]), args.eps)
    out.write(f"# command=mixing\n# T={args.T}\n# eps={args.eps}\n# dynamics={args.dynamics}\n")
    if budget is not None:
        out.write(f"# budget={budget:.6g}\n")
    out.write("start,tau\n")
    for s, tau in taus.items():
        out.write(f"{' '.join(_strategy_label(g, i, j) for i, j in enumerate(s))},{tau}\n")
    if budget is not None and max(taus.values()) > budget:
        return 2
    return 0


def cmd_count_bipartite(args, out) -> int:
    seq = DegreeSequence(args.k, args.alpha)
    out.write(f"{exact_bipartite_count(seq, args.max_rows, args.max_cells)}\n")
    return 0


def cmd_mckay(args, out) -> int:
    seq = DegreeSequence(args.k, args.alpha)
    if not seq.balanced:
        raise InputError("degree sums of --k and --alpha differ")
    t = McKayTerms.of(seq)
    log_phi = mckay_estimate(seq)
    out.write(f"K={t.K}\nK2={t.K2}\nA2={t.A2}\nlog_phi={log_phi:.12g}\nphi={math.exp(log_phi):.12g}\n")
    try:
        exact = exact_bipartite_count(seq, args.max_rows, args.max_cells)
    except ValueError as exc:
        out.write(f"# exact count skipped: {exc}\n")
        return 0
    out.write(f"exact={exact}\n")
    if exact:
        out.write(f"ratio={math.exp(log_phi - math.log(exact)):.12g}\n")
    return 0


COMMANDS = {
    "sample-gibbs": cmd_sample_gibbs,
    "sample-pne": cmd_sample_pne,
    "run-dynamics": cmd_run_dynamics,
    "verify": cmd_verify,
    "mixing": cmd_mixing,
    "count-bipartite": cmd_count_bipartite,
    "mckay": cmd_mckay,
}


def run(argv: Sequence[str] | None = None, stdout=None) -> int:
    stdout = stdout if stdout is not None else sys.stdout
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "threads", 1) < 1:
            raise InputError("--threads must be >= 1")
        buf = io.StringIO()
        code = COMMANDS[args.command](args, buf)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(buf.getvalue())
        else:
            stdout.write(buf.getvalue())
        return code
    except (InputError, GameError, SamplingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
