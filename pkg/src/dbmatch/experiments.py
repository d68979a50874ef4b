"""Monte Carlo harness for static matching experiments.

Replicate ``r`` of a configuration draws its feasible graph, thinning and
grant/accept randomness from streams keyed by ``(base_seed, r)`` only, so
every selection rule and every exponent in a sweep sees the same graphs and
the same uniforms (common random numbers). Results never depend on the
number of worker processes.
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import theory
from .graph import ConfigError, DegreeSpec, binomial_pmf, generate_dout
from .matching import (
    SelectionRule,
    count_granted,
    max_matching,
    round_draws,
    select_grants,
    select_grants_alphas,
)
from .rng import RngSeed
from .thinning import ThinningPolicy, thin


@dataclass(frozen=True)
class AlphaGrid:
    start: float = -20.0
    stop: float = 0.0
    step: float = 0.1
    include_greedy: bool = True

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigError("alpha grid step must be positive")
        if self.start > self.stop or self.stop > 0:
            raise ConfigError("alpha grid needs start <= stop <= 0")

    def values(self) -> np.ndarray:
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        # Rounded so that e.g. -1.4 is exactly the literal -1.4.
        return np.round(self.start + self.step * np.arange(count), 10) + 0.0  # no negative zero


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 144
    replicates: int = 1000
    deg: DegreeSpec = field(default_factory=lambda: DegreeSpec.deterministic(2))
    thinning: ThinningPolicy = field(default_factory=ThinningPolicy.none)
    rule: SelectionRule = field(default_factory=SelectionRule.uniform)
    alpha_grid: AlphaGrid | None = None
    base_seed: RngSeed = field(default_factory=RngSeed)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if self.base_seed.stream_id >= 1 << 32:
            raise ConfigError("base stream id must fit in 32 bits")

    def replicate_seed(self, r: int) -> RngSeed:
        return RngSeed(self.base_seed.seed, (self.base_seed.stream_id << 32) | r)


@dataclass(frozen=True)
class SweepRow:
    x: float
    mean: float
    q1: float
    q3: float
    stderr: float
    theory: float | None = None
    series: str = ""


@dataclass
class SweepResult:
    rows: list[SweepRow]
    samples: list[np.ndarray] = field(default_factory=list, repr=False)

    COLUMNS = ("x", "mean", "q1", "q3", "stderr", "theory")

    def to_csv(self, with_series: bool = False) -> str:
        out = io.StringIO()
        cols = (("series",) if with_series else ()) + self.COLUMNS
        out.write(",".join(cols) + "\n")
        for row in self.rows:
            vals = [fmt(row.x), fmt(row.mean), fmt(row.q1), fmt(row.q3), fmt(row.stderr), fmt(row.theory)]
            if with_series:
                vals.insert(0, row.series)
            out.write(",".join(vals) + "\n")
        return out.getvalue()

    def __add__(self, other: "SweepResult") -> "SweepResult":
        return SweepResult(self.rows + other.rows, self.samples + other.samples)


def fmt(v) -> str:
    """Locale-independent number formatting used for every CSV cell."""
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if math.isinf(v):
        return "-inf" if v < 0 else "inf"
    return f"{float(v):.10g}"


def summarize(x: float, values: np.ndarray, theory_value: float | None = None, series: str = "") -> SweepRow:
    v = np.sort(np.asarray(values, dtype=float))
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    q1, q3 = np.percentile(v, [25, 75])
    return SweepRow(x, float(v.mean()), float(q1), float(q3), se, theory_value, series)


# ---------------------------------------------------------------------------
# Theory attachment
# ---------------------------------------------------------------------------


def intention_degree(deg: DegreeSpec, policy: ThinningPolicy, n: int) -> DegreeSpec:
    """Out-degree law of the intention graph after thinning a D-out graph."""
    if policy.kind == "none":
        return deg
    if policy.kind == "bern":
        q = policy.q
        if deg.kind == "det":
            return DegreeSpec.binomial(min(deg.d, n), q)
        if deg.kind == "bin" and deg.n <= n:
            return DegreeSpec.binomial(deg.n, deg.p * q)
        if deg.kind == "pois":
            return DegreeSpec.poisson(deg.lam * q)
        base = _capped_pmf(deg, n)
        out = np.zeros(base.size)
        for d, w in enumerate(base):
            if w:
                out[: d + 1] += w * binomial_pmf(np.arange(d + 1), d, q)
        return DegreeSpec.empirical(out / out.sum())
    base = _capped_pmf(deg, n)
    if policy.k >= base.size - 1:
        return DegreeSpec.empirical(base)
    out = base[: policy.k + 1].copy()
    out[policy.k] += math.fsum(base[policy.k + 1 :])
    return DegreeSpec.empirical(out / math.fsum(out))


def _capped_pmf(deg: DegreeSpec, n: int) -> np.ndarray:
    pmf = deg.pmf(n)
    pmf[n] += max(0.0, 1.0 - math.fsum(pmf))
    return pmf / math.fsum(pmf)


def theory_value(cfg: ExperimentConfig, rule: SelectionRule) -> float | None:
    """Closed-form prediction for ``rule`` on ``cfg`` where one exists."""
    deg = intention_degree(cfg.deg, cfg.thinning, cfg.n)
    if not rule.is_greedy and rule.alpha == 0.0:
        return theory.mean_match_uniform(cfg.n, deg.prob_zero())
    if rule.is_greedy and deg.mean() > 0:
        return theory.mean_match_greedy_bound(deg).value
    return None


# ---------------------------------------------------------------------------
# Replicate kernels
# ---------------------------------------------------------------------------


def _intention_graph(cfg: ExperimentConfig, r: int):
    seed = cfg.replicate_seed(r)
    g = generate_dout(cfg.n, cfg.deg, seed)
    return thin(g, cfg.thinning, seed), seed


def _fraction_kernel(cfg: ExperimentConfig, r: int) -> float:
    g, seed = _intention_graph(cfg, r)
    grant_draws, _ = round_draws(g, seed)
    grants = select_grants(g, cfg.rule, grant_draws)
    return float(count_granted(grants, g.n_receivers)[0]) / cfg.n


def _sweep_kernel(cfg: ExperimentConfig, r: int) -> np.ndarray:
    g, seed = _intention_graph(cfg, r)
    grant_draws, _ = round_draws(g, seed)
    alphas = cfg.alpha_grid.values()
    rows = [count_granted(select_grants_alphas(g, alphas, grant_draws), g.n_receivers)]
    if cfg.alpha_grid.include_greedy:
        rows.insert(0, count_granted(select_grants(g, SelectionRule.greedy(), grant_draws), g.n_receivers))
    return np.concatenate(rows) / cfg.n


def _maxmatch_kernel(cfg: ExperimentConfig, r: int) -> float:
    g, _ = _intention_graph(cfg, r)
    return max_matching(g) / cfg.n


def _run_chunk(kernel, cfg, lo, hi):
    return [kernel(cfg, r) for r in range(lo, hi)]


def default_workers() -> int:
    return os.cpu_count() or 1


def map_replicates(kernel, cfg: ExperimentConfig, workers: int = 1) -> np.ndarray:
    """Evaluate ``kernel(cfg, r)`` for every replicate, in replicate order."""
    R = cfg.replicates
    if workers <= 1 or R < 2 * workers:
        return np.array(_run_chunk(kernel, cfg, 0, R))
    bounds = np.linspace(0, R, workers + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(_run_chunk, kernel, cfg, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
        parts = [f.result() for f in futs]
    return np.array([v for part in parts for v in part])


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def run_replicates(cfg: ExperimentConfig, workers: int = 1, x: float | None = None, series: str = "") -> SweepResult:
    """Matched fraction of ``cfg.rule`` over all replicates, with its theory value."""
    values = map_replicates(_fraction_kernel, cfg, workers)
    x = cfg.deg.mean() if x is None else x
    return SweepResult([summarize(x, values, theory_value(cfg, cfg.rule), series)], [values])


def sweep_alpha(cfg: ExperimentConfig, workers: int = 1, series: str = "") -> SweepResult:
    """Mean matched fraction across the alpha grid, greedy (-inf) first."""
    grid = cfg.alpha_grid or AlphaGrid()
    cfg = replace(cfg, alpha_grid=grid)
    values = map_replicates(_sweep_kernel, cfg, workers)  # replicates x points
    xs = list(grid.values())
    if grid.include_greedy:
        xs.insert(0, -math.inf)
    rows, samples = [], []
    for j, a in enumerate(xs):
        rule = SelectionRule.greedy() if a == -math.inf else SelectionRule.db(a)
        col = values[:, j]
        rows.append(summarize(a, col, theory_value(cfg, rule), series))
        samples.append(col)
    return SweepResult(rows, samples)


def find_alpha_star(cfg: ExperimentConfig, workers: int = 1, sweep: SweepResult | None = None) -> tuple[float, float]:
    """Grid argmax of the mean matched fraction; ties go to the larger alpha."""
    if sweep is None:
        grid = cfg.alpha_grid or AlphaGrid(-20.0, 0.0, 0.1, True)
        sweep = sweep_alpha(replace(cfg, alpha_grid=grid), workers)
    best = None
    for row in sweep.rows:
        if best is None or row.mean > best.mean or (row.mean == best.mean and row.x > best.x):
            best = row
    return best.x, best.mean


def max_matching_baseline(cfg: ExperimentConfig, workers: int = 1, x: float | None = None, series: str = "") -> SweepResult:
    """Mean maximum-matching fraction of the intention graphs (omniscient bound)."""
    values = map_replicates(_maxmatch_kernel, cfg, workers)
    x = cfg.deg.mean() if x is None else x
    return SweepResult([summarize(x, values, None, series)], [values])
