"""Command-line front end: ``dbmatch <subcommand> ...``."""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import theory
from .dynsim import ALGORITHMS, FabricConfig, Workload, load_sweep, points_csv, run_dynsim
from .experiments import (
    AlphaGrid,
    ExperimentConfig,
    find_alpha_star,
    fmt,
    max_matching_baseline,
    run_replicates,
    sweep_alpha,
)
from .graph import BipartiteGraph, ConfigError, DegreeSpec, generate_dout, receiver_degrees
from .matching import IslipState, SelectionRule, islip_round, max_matching, run_round
from .presets import PRESETS, RunOptions
from .rng import RngSeed
from .thinning import ThinningPolicy, thin


def _typed(parse, what: str):
    def convert(text: str):
        try:
            return parse(text)
        except (ConfigError, ValueError) as exc:
            raise argparse.ArgumentTypeError(f"invalid {what} {text!r}: {exc}") from None

    convert.__name__ = what
    return convert


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise ValueError("must be at least 1")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise ValueError("must be non-negative")
    return value


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise ValueError("must lie in [0, 1]")
    return value


def _load(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise ValueError("must lie in [0, 1)")
    return value


def _grid(text: str) -> list[float]:
    """Parse ``a:b:step`` into an inclusive list of values."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError("expected a:b:step")
    a, b, step = map(float, parts)
    if step <= 0 or b < a:
        raise ValueError("need a <= b and step > 0")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [round(a + i * step, 10) for i in range(count)]


def _alpha_grid(text: str) -> AlphaGrid:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError("expected start:stop:step")
    return AlphaGrid(*map(float, parts))


def _rule(text: str) -> str:
    if text in ("islip", "max"):
        return text
    SelectionRule.parse(text)
    return text


INT = _typed(_positive_int, "count")
NONNEG = _typed(_nonneg_int, "integer")
DEG = _typed(DegreeSpec.parse, "degree spec")
THIN = _typed(ThinningPolicy.parse, "thinning policy")
RULE = _typed(_rule, "rule")
PROB = _typed(_probability, "probability")
LOAD = _typed(_load, "load")
GRID = _typed(_grid, "grid")
AGRID = _typed(_alpha_grid, "alpha grid")
REAL = _typed(float, "number")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    g = thin(generate_dout(args.n, args.deg, RngSeed(args.seed)), args.thinning, RngSeed(args.seed))
    if args.dump_graph:
        _emit(g.to_text(), None if args.dump_graph == "-" else args.dump_graph)
        if args.dump_graph == "-":
            return 0
    rdeg = receiver_degrees(g)
    sys.stdout.write(
        f"senders {g.n_senders}\nreceivers {g.n_receivers}\nedges {g.n_edges}\n"
        f"mean_out_degree {fmt(g.n_edges / g.n_senders)}\n"
        f"isolated_receivers {int(np.count_nonzero(rdeg == 0))}\n"
    )
    return 0


def _load_graph(path: str) -> BipartiteGraph:
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"--graph: cannot read {path}: {exc}") from exc
    return BipartiteGraph.from_text(text)


def cmd_match(args) -> int:
    if args.graph:
        g = _load_graph(args.graph)
    else:
        g = generate_dout(args.n, args.deg, RngSeed(args.seed))
    g = thin(g, args.thinning, RngSeed(args.seed))
    lines = []
    if args.rule == "max":
        size = max_matching(g)
        lines += [f"matched {size}", f"matched_fraction {fmt(size / g.n_receivers)}"]
    else:
        if args.rule == "islip":
            res = islip_round(g, IslipState.fresh(g.n_senders, g.n_receivers))
        else:
            res = run_round(g, SelectionRule.parse(args.rule), RngSeed(args.seed))
        lines += [f"matched {res.size}", f"matched_fraction {fmt(res.matched_fraction)}"]
        lines += [f"control_{k} {v}" for k, v in res.control_counts.items()]
        if args.pairs:
            lines += [f"pair {u} {v}" for u, v in res.pairs]
    if args.receiver_degrees:
        lines.append("receiver_degrees " + " ".join(map(str, receiver_degrees(g).tolist())))
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_theory(args) -> int:
    f = args.formula
    deg = args.deg
    if f == "uniform":
        value = theory.mean_match_uniform(args.n, deg.prob_zero())
    elif f == "uniform-limit":
        value = theory.mean_match_uniform_limit(deg)
    elif f == "greedy-bound":
        res = theory.mean_match_greedy_bound(deg)
        sys.stdout.write(f"{res.value:.12g}\nterms {res.terms}\ntail_bound {res.tail_bound:.3g}\n")
        return 0
    elif f in ("f", "greedy-f"):
        if args.s is None:
            raise ConfigError("--s is required for the f formula")
        value = theory.greedy_f(args.s, deg)
    elif f == "binom-reciprocal":
        if args.p is None or args.theta is None:
            raise ConfigError("--p and --theta are required for binom-reciprocal")
        if not 0.0 < args.p <= 1.0:
            raise ConfigError("--p must lie in (0, 1]")
        value = theory.binom_reciprocal(args.n, args.p, args.theta)
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown formula {f}")
    sys.stdout.write(f"{value:.12g}\n")
    return 0


def _run_preset(name: str, args, kind: str) -> int:
    preset = PRESETS.get(name)
    if preset is None or preset.kind != kind:
        names = ", ".join(n for n, p in PRESETS.items() if p.kind == kind)
        raise ConfigError(f"--preset: unknown {kind} preset {name!r}; choose one of {names}")
    opts = RunOptions(seed=args.seed, workers=args.threads, replicates=getattr(args, "replicates", None), slots=getattr(args, "slots", None))
    _emit(preset.run(opts), args.out)
    return 0


def cmd_experiment(args) -> int:
    if args.preset:
        return _run_preset(args.preset, args, "experiment")
    reps = args.replicates if args.replicates is not None else 1000
    cfg = ExperimentConfig(n=args.n, replicates=reps, deg=args.deg, thinning=args.thinning, base_seed=RngSeed(args.seed))
    if args.alpha_grid is not None:
        cfg = replace(cfg, alpha_grid=args.alpha_grid)
        result = sweep_alpha(cfg, args.threads)
        if args.alpha_star:
            a, v = find_alpha_star(cfg, sweep=result)
            sys.stderr.write(f"alpha_star {fmt(a)} value {fmt(v)}\n")
    elif args.rule == "max":
        result = max_matching_baseline(cfg, args.threads)
    elif args.rule == "islip":
        raise ConfigError("--rule islip is only meaningful in dynsim; use match for a single round")
    else:
        result = run_replicates(replace(cfg, rule=SelectionRule.parse(args.rule)), args.threads)
    _emit(result.to_csv(), args.out)
    return 0


def cmd_dynsim(args) -> int:
    if args.preset:
        return _run_preset(args.preset, args, "dynsim")
    slots = args.slots if args.slots is not None else 4000
    warmup = args.warmup if args.warmup is not None else slots // 4
    fabric = FabricConfig(
        n_hosts=args.hosts,
        base_rtt=args.rtt,
        slot_duration=args.slot_duration if args.slot_duration is not None else args.rtt,
        algorithm=args.algo,
        horizon=slots,
        warmup=warmup,
    )
    wl = Workload.parse(args.workload)
    if args.load_grid is not None:
        points = load_sweep(fabric, wl, args.load_grid, (args.algo,), RngSeed(args.seed), args.threads)
        _emit(points_csv(points), args.out)
        return 0
    summary = run_dynsim(fabric, wl.with_load(args.load), RngSeed(args.seed))
    _emit(summary.slots_csv(), args.out)
    (sys.stderr if not args.out else sys.stdout).write(summary.summary_text())
    return 0


def cmd_presets(args) -> int:
    width = max(map(len, PRESETS))
    for name, p in PRESETS.items():
        sys.stdout.write(f"{name.ljust(width)}  {p.kind:<10}  {p.description}\n")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=NONNEG, default=0, help="base random seed (default 0)")
    common.add_argument(
        "--threads", type=INT, default=os.cpu_count() or 1, help="worker processes (default: all cores)"
    )

    p = argparse.ArgumentParser(prog="dbmatch", description="Degree-biased one-round bipartite matching toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="draw a D-out random graph")
    g.add_argument("--n", type=INT, default=144)
    g.add_argument("--deg", type=DEG, default=DegreeSpec.deterministic(2), help="det:<d> | bin:<n>,<p> | pois:<m> | emp:<p0>,<p1>,...")
    g.add_argument("--thinning", "--thin", type=THIN, default=ThinningPolicy.none(), help="none | bern:<q> | max:<k>")
    g.add_argument("--dump-graph", metavar="PATH", help="write the graph in text form ('-' for stdout)")
    g.set_defaults(func=cmd_generate)

    m = sub.add_parser("match", parents=[common], help="run one matching round")
    m.add_argument("--graph", metavar="PATH", help="graph file written by generate --dump-graph ('-' for stdin)")
    m.add_argument("--n", type=INT, default=144)
    m.add_argument("--deg", type=DEG, default=DegreeSpec.deterministic(2))
    m.add_argument("--thinning", "--thin", type=THIN, default=ThinningPolicy.none())
    m.add_argument("--rule", type=RULE, default="uniform", help="uniform | greedy | db:<alpha> | islip | max")
    m.add_argument("--pairs", action="store_true", help="list matched pairs")
    m.add_argument("--receiver-degrees", action="store_true", help="print the receiver degree vector")
    m.set_defaults(func=cmd_match)

    t = sub.add_parser("theory", parents=[common], help="evaluate a closed-form prediction")
    t.add_argument(
        "--formula", required=True, choices=["uniform", "uniform-limit", "greedy-bound", "f", "greedy-f", "binom-reciprocal"]
    )
    t.add_argument("--n", type=INT, default=144)
    t.add_argument("--deg", type=DEG, default=DegreeSpec.deterministic(2))
    t.add_argument("--s", type=NONNEG)
    t.add_argument("--p", type=PROB)
    t.add_argument("--theta", type=REAL)
    t.set_defaults(func=cmd_theory)

    e = sub.add_parser("experiment", parents=[common], help="Monte Carlo experiments (CSV output)")
    e.add_argument("--preset", help="run a named preset (see 'presets')")
    e.add_argument("--n", type=INT, default=144)
    e.add_argument("--replicates", type=INT)
    e.add_argument("--deg", type=DEG, default=DegreeSpec.deterministic(2))
    e.add_argument("--thinning", "--thin", type=THIN, default=ThinningPolicy.none())
    e.add_argument("--rule", type=RULE, default="uniform", help="uniform | greedy | db:<alpha> | max")
    e.add_argument("--alpha-grid", type=AGRID, help="sweep alpha over start:stop:step (greedy added at -inf)")
    e.add_argument("--alpha-star", action="store_true", help="with --alpha-grid, report the best alpha on stderr")
    e.add_argument("--out", metavar="PATH")
    e.set_defaults(func=cmd_experiment)

    d = sub.add_parser("dynsim", parents=[common], help="slotted dynamic simulation")
    d.add_argument("--preset", help="run a named dynamic preset (see 'presets')")
    d.add_argument("--hosts", type=INT, default=144)
    d.add_argument("--algo", choices=ALGORITHMS, default="2cgs")
    d.add_argument("--workload", default="imc10-like", help="imc10-like | sgd-like | file:<path>")
    d.add_argument("--load", type=LOAD, default=0.5)
    d.add_argument("--load-grid", type=GRID, help="a:b:step; emits one summary row per load")
    d.add_argument("--slots", type=INT)
    d.add_argument("--warmup", type=NONNEG)
    d.add_argument("--rtt", type=REAL, default=4e-6, help="base round-trip time in seconds")
    d.add_argument("--slot-duration", type=REAL, help="seconds per slot (default: the RTT)")
    d.add_argument("--out", metavar="PATH")
    d.set_defaults(func=cmd_dynsim)

    s = sub.add_parser("presets", parents=[common], help="list presets")
    s.set_defaults(func=cmd_presets)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"dbmatch {args.command}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
