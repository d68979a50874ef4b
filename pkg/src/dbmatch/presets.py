"""Named, fully specified runs for every reproduced figure and table."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

from .dynsim import FabricConfig, LoadPoint, Workload, load_sweep, points_csv
from .experiments import (
    AlphaGrid,
    ExperimentConfig,
    SweepResult,
    SweepRow,
    find_alpha_star,
    max_matching_baseline,
    run_replicates,
    sweep_alpha,
)
from .graph import DegreeSpec
from .matching import SelectionRule
from .rng import RngSeed
from .thinning import ThinningPolicy

DEGREES = (2, 3, 4, 5, 6, 8, 10)
TABLE_DEGREES = (2, 3, 4, 8)
SWEEP_DEGREES = (2, 3, 4, 8)


@dataclass(frozen=True)
class RunOptions:
    seed: int = 0
    workers: int = 1
    replicates: int | None = None  # overrides the preset's replicate count
    slots: int | None = None  # overrides the dynamic horizon (warmup scales along)


@dataclass(frozen=True)
class Preset:
    name: str
    kind: str  # "experiment" or "dynsim"
    description: str
    run: Callable[[RunOptions], str]


def _base(opts: RunOptions, deg: DegreeSpec, **kw) -> ExperimentConfig:
    reps = opts.replicates if opts.replicates is not None else 1000
    return ExperimentConfig(n=144, replicates=reps, deg=deg, base_seed=RngSeed(opts.seed), **kw)


def _bin(d: int) -> DegreeSpec:
    return DegreeSpec.binomial(144, d / 144)


def _det(d: int) -> DegreeSpec:
    return DegreeSpec.deterministic(d)


def _vs_degree(family, rule: SelectionRule, series: str):
    def run(opts: RunOptions) -> str:
        out = SweepResult([])
        for d in DEGREES:
            out += run_replicates(_base(opts, family(d), rule=rule), opts.workers, x=d, series=series)
        return out.to_csv(with_series=True)

    return run


def _alpha_curves(family, cases):
    """``cases`` is a list of (series label, degree, thinning, include max matching)."""

    def run(opts: RunOptions) -> str:
        out = SweepResult([])
        for label, d, policy, with_max in cases:
            cfg = _base(opts, family(d), thinning=policy, alpha_grid=AlphaGrid())
            out += sweep_alpha(cfg, opts.workers, series=label)
            if with_max:
                out += max_matching_baseline(cfg, opts.workers, x=0.0, series=f"{label}/max")
        return out.to_csv(with_series=True)

    return run


def _table(family):
    def run(opts: RunOptions) -> str:
        out = SweepResult([])
        for d in TABLE_DEGREES:
            cfg = _base(opts, family(d), alpha_grid=AlphaGrid())
            sweep = sweep_alpha(cfg, opts.workers)
            a_star, _ = find_alpha_star(cfg, sweep=sweep)
            by_x = {row.x: row for row in sweep.rows}
            for label, x in (("uniform", 0.0), ("optimal", a_star), ("greedy", float("-inf"))):
                out.rows.append(replace(by_x[x], x=d, series=label))
            out.rows.append(SweepRow(d, a_star, None, None, None, None, "alpha_star"))
            thinned = replace(cfg, thinning=ThinningPolicy.max_k(2), rule=SelectionRule.greedy(), alpha_grid=None)
            out += run_replicates(thinned, opts.workers, x=d, series="max2_greedy")
        return out.to_csv(with_series=True)

    return run


def _dyn(workload: str, loads, algorithms=("1rdcpim", "2cgs", "islip")):
    def run(opts: RunOptions) -> str:
        fabric = FabricConfig(horizon=8000, warmup=2000)
        if opts.slots is not None:
            fabric = replace(fabric, horizon=opts.slots, warmup=opts.slots // 4)
        wl = Workload.parse(workload)
        points: list[LoadPoint] = load_sweep(fabric, wl, loads, algorithms, RngSeed(opts.seed), opts.workers)
        return points_csv(points)

    return run


_FIG_LOADS = (0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85)
_STAB_LOADS = (0.4, 0.5, 0.6, 0.7)

PRESETS: dict[str, Preset] = {
    p.name: p
    for p in [
        Preset("fig3a", "experiment", "uniform selection vs mean degree, binomial degrees", _vs_degree(_bin, SelectionRule.uniform(), "uniform")),
        Preset("fig3b", "experiment", "greedy selection vs mean degree, binomial degrees", _vs_degree(_bin, SelectionRule.greedy(), "greedy")),
        Preset("fig4a", "experiment", "uniform selection vs degree, deterministic degrees", _vs_degree(_det, SelectionRule.uniform(), "uniform")),
        Preset("fig4b", "experiment", "greedy selection vs degree, deterministic degrees", _vs_degree(_det, SelectionRule.greedy(), "greedy")),
        Preset(
            "fig5a",
            "experiment",
            "alpha sweep with maximum-matching bound, binomial degrees 2/3/4/8",
            _alpha_curves(_bin, [(f"d={d}", d, ThinningPolicy.none(), True) for d in SWEEP_DEGREES]),
        ),
        Preset(
            "fig5b",
            "experiment",
            "alpha sweep with maximum-matching bound, deterministic degrees 2/3/4/8",
            _alpha_curves(_det, [(f"d={d}", d, ThinningPolicy.none(), True) for d in SWEEP_DEGREES]),
        ),
        Preset(
            "fig6a",
            "experiment",
            "alpha sweep after max(k) thinning, binomial degrees d in {4,8}, k in {2,3,4}",
            _alpha_curves(_bin, [(f"d={d},k={k}", d, ThinningPolicy.max_k(k), False) for d in (4, 8) for k in (2, 3, 4)]),
        ),
        Preset(
            "fig6b",
            "experiment",
            "alpha sweep after Bern(k/d) thinning, deterministic degrees d in {4,8}, k in {2,3,4}",
            _alpha_curves(_det, [(f"d={d},k={k}", d, ThinningPolicy.bernoulli(k / d), False) for d in (4, 8) for k in (2, 3, 4)]),
        ),
        Preset("table1", "experiment", "uniform/optimal/greedy/max(2)+greedy and alpha*, binomial degrees", _table(_bin)),
        Preset("table2", "experiment", "uniform/optimal/greedy/max(2)+greedy and alpha*, deterministic degrees", _table(_det)),
        Preset("fig7", "dynsim", "matching, throughput, FCT and control counts vs load, imc10-like workload", _dyn("imc10-like", _FIG_LOADS)),
        Preset("fig8", "dynsim", "matching, throughput, FCT and control counts vs load, sgd-like workload", _dyn("sgd-like", _FIG_LOADS)),
        Preset("stability", "dynsim", "stability of each algorithm on the load grid 0.4/0.5/0.6/0.7, imc10-like", _dyn("imc10-like", _STAB_LOADS)),
    ]
}
