"""End-to-end acceptance checks at desk scale (N=144, 1000 replicates).

Each test prints one ``criterion <k>: PASS|FAIL ...`` line, repeated in the
terminal summary, and then asserts the same condition.
"""

import math
import random
import time
from fractions import Fraction

import pytest

from conftest import record_verdict
from dbmatch.dynsim import FabricConfig, Workload, load_sweep, max_stable_load, run_dynsim
from dbmatch.experiments import AlphaGrid, ExperimentConfig, find_alpha_star, max_matching_baseline, run_replicates, sweep_alpha
from dbmatch.graph import DegreeSpec
from dbmatch.matching import SelectionRule
from dbmatch.presets import PRESETS, RunOptions
from dbmatch.rng import RngSeed
from dbmatch.theory import binom_reciprocal, mean_match_greedy_bound, mean_match_uniform, mean_match_uniform_limit
from dbmatch.thinning import ThinningPolicy

from oracles import binom_reciprocal_direct, uniform_match_enumeration

N = 144
SEED = RngSeed(0)


def verdict(k: int, ok: bool, detail: str) -> None:
    record_verdict(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


def _mean(deg, rule, thinning=ThinningPolicy.none()):
    cfg = ExperimentConfig(n=N, replicates=1000, deg=deg, thinning=thinning, rule=rule, base_seed=SEED)
    return run_replicates(cfg).rows[0].mean


def _check_table(expected, deg_of, tol=0.01):
    rules = {
        "uniform": (SelectionRule.uniform(), ThinningPolicy.none()),
        "greedy": (SelectionRule.greedy(), ThinningPolicy.none()),
        "max2_greedy": (SelectionRule.greedy(), ThinningPolicy.max_k(2)),
    }
    bad, parts = [], []
    for col, cells in expected.items():
        rule, policy = rules[col]
        for d, target in cells.items():
            got = _mean(deg_of(d), rule, policy)
            parts.append(f"{col}[{d}]={got:.4f}/{target}")
            if abs(got - target) > tol:
                bad.append(parts[-1])
    return bad, parts


# ---------------------------------------------------------------------------


def _pmf_grid():
    steps = [Fraction(k, 4) for k in range(5)]
    for a in steps:
        for b in steps:
            for c in steps:
                if a + b + c <= 1:
                    yield [a, b, c, 1 - a - b - c]


def test_criterion_01_uniform_formula_exact():
    t0 = time.perf_counter()
    worst, cases = 0.0, 0
    for n in (1, 2, 3):
        for pmf in _pmf_grid():
            exact = float(uniform_match_enumeration(n, pmf))
            worst = max(worst, abs(mean_match_uniform(n, float(pmf[0])) - exact))
            cases += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 1.0
    verdict(1, ok, f"{cases} (N, pmf) cases, max |formula - enumeration| = {worst:.2e}, {elapsed:.2f}s")
    assert ok


def test_criterion_02_binomial_table():
    t0 = time.perf_counter()
    expected = {
        "uniform": {2: 0.581, 4: 0.626, 8: 0.633},
        "greedy": {2: 0.681, 4: 0.655, 8: 0.455},
        "max2_greedy": {2: 0.678, 4: 0.728, 8: 0.731},
    }
    bad, parts = _check_table(expected, lambda d: DegreeSpec.binomial(N, d / N))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 60
    verdict(2, ok, f"{' '.join(parts)} ({elapsed:.1f}s)")
    assert ok, bad


def test_criterion_03_deterministic_table():
    expected = {
        "uniform": {d: 0.633 for d in (2, 3, 4, 8)},
        "greedy": {2: 0.729, 8: 0.431},
        "max2_greedy": {d: 0.737 for d in (2, 3, 4, 8)},
    }
    bad, parts = _check_table(expected, DegreeSpec.deterministic)
    verdict(3, not bad, " ".join(parts))
    assert not bad, bad


def test_criterion_04_greedy_bound_values():
    det2 = mean_match_greedy_bound(DegreeSpec.deterministic(2)).value
    bin10 = mean_match_greedy_bound(DegreeSpec.binomial(N, 10 / N)).value
    ok = abs(det2 - 0.7306) <= 5e-4 and abs(bin10 - 0.3972) <= 5e-4
    verdict(4, ok, f"det:2 -> {det2:.6f} (target 0.7306), bin mean 10 -> {bin10:.6f} (target 0.3972), tol 5e-4")
    assert ok


def test_criterion_05_uniform_limits():
    det = mean_match_uniform_limit(DegreeSpec.deterministic(4))
    spec = DegreeSpec.binomial(N, 4 / N)
    lim = mean_match_uniform_limit(spec)
    mc = _mean(spec, SelectionRule.uniform())
    ok = abs(det - (1 - 1 / math.e)) <= 1e-6 and abs(det - 0.632121) <= 1e-6 and abs(lim - mc) <= 0.01
    verdict(5, ok, f"det limit {det:.7f}; binomial mean 4 limit {lim:.5f} vs N=144 mean {mc:.5f}")
    assert ok


def test_criterion_06_alpha_sweep():
    a_star, value = find_alpha_star(ExperimentConfig(n=N, deg=DegreeSpec.binomial(N, 8 / N), alpha_grid=AlphaGrid(), base_seed=SEED))
    sweep = sweep_alpha(ExperimentConfig(n=N, deg=DegreeSpec.deterministic(4), alpha_grid=AlphaGrid(-2.0, 0.0, 0.1), base_seed=SEED))
    at_m2 = next(r.mean for r in sweep.rows if r.x == -2.0)
    ok = abs(value - 0.661) <= 0.01 and -2.0 <= a_star <= -0.8 and abs(at_m2 - 0.701) <= 0.01
    verdict(6, ok, f"bin mean 8: alpha*={a_star:g} value={value:.4f}; det:4 at alpha=-2: {at_m2:.4f}")
    assert ok


def test_criterion_07_max_matching_bound():
    m = max_matching_baseline(ExperimentConfig(n=N, deg=DegreeSpec.binomial(N, 4 / N), base_seed=SEED)).rows[0].mean
    ok = abs(m - 0.972) <= 0.005
    verdict(7, ok, f"bin mean 4 max-matching fraction {m:.4f} (target 0.972 +- 0.005)")
    assert ok


def test_criterion_08_binomial_reciprocal():
    gen = random.Random(2024)
    worst = 0.0
    for _ in range(100):
        n, p, theta = gen.randint(0, 50), gen.uniform(1e-3, 1.0), gen.uniform(-1.0, 1.0)
        worst = max(worst, abs(binom_reciprocal(n, p, theta) - binom_reciprocal_direct(n, p, theta)))
    ok = worst <= 1e-10
    verdict(8, ok, f"100 random (n, p, theta): max |closed form - direct sum| = {worst:.2e}")
    assert ok


def test_criterion_09_dynamic_saturation():
    fabric = FabricConfig(n_hosts=N, horizon=4000, warmup=1000)
    wl = Workload.imc10_like(0.85)
    dc = run_dynsim(FabricConfig(**{**fabric.__dict__, "algorithm": "1rdcpim"}), wl, SEED).matching_fraction
    cg = run_dynsim(FabricConfig(**{**fabric.__dict__, "algorithm": "2cgs"}), wl, SEED).matching_fraction
    ok = abs(dc - 0.633) <= 0.01 and abs(cg - 0.731) <= 0.01
    verdict(9, ok, f"load 0.85: 1r-dcPIM {dc:.4f} (0.633), 2CGS {cg:.4f} (0.731)")
    assert ok


def test_criterion_10_stability_ordering():
    loads = (0.4, 0.5, 0.6, 0.7)
    fabric = FabricConfig(n_hosts=N, horizon=8000, warmup=2000)
    points = load_sweep(fabric, Workload.imc10_like(), loads, ("islip", "1rdcpim", "2cgs"), SEED)
    by = {a: [p for p in points if p.algorithm == a] for a in ("islip", "1rdcpim", "2cgs")}
    stable = {a: max_stable_load(ps) for a, ps in by.items()}

    def onset(ps, flag):
        return next((p.load for p in sorted(ps, key=lambda r: r.load) if flag(p)), None)

    coincide = {a: onset(ps, lambda p: not p.stable) == onset(ps, lambda p: p.fct_blowup) for a, ps in by.items()}
    at06 = {a: next(p.stable for p in ps if p.load == 0.6) for a, ps in by.items()}
    ordering = stable["islip"] < stable["1rdcpim"] < stable["2cgs"]
    ok = ordering and at06["2cgs"] and not at06["1rdcpim"] and all(coincide.values())
    grid = " ".join(f"{a}:" + "".join("S" if p.stable else "U" for p in ps) for a, ps in by.items())
    verdict(
        10,
        ok,
        f"max stable load islip={stable['islip']} 1rdcpim={stable['1rdcpim']} 2cgs={stable['2cgs']}; "
        f"grid {grid}; FCT blow-up coincides: {coincide}",
    )
    assert ok


def test_criterion_11_determinism():
    mismatched = []
    for name, preset in PRESETS.items():
        small = RunOptions(seed=5, workers=1, replicates=6, slots=120)
        first = preset.run(small)
        if preset.run(small) != first:
            mismatched.append(f"{name}@1")
        if preset.kind == "experiment" and preset.run(RunOptions(seed=5, workers=2, replicates=6)) != first:
            mismatched.append(f"{name}@2")
    full = PRESETS["fig4a"]
    if full.run(RunOptions(seed=7, workers=1)) != full.run(RunOptions(seed=7, workers=3)):
        mismatched.append("fig4a full scale")
    ok = not mismatched
    verdict(11, ok, f"{len(PRESETS)} presets rerun at reduced scale, fig4a at full scale over 1 and 3 workers; mismatches: {mismatched or 'none'}")
    assert ok


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(pytest.main([__file__, "-v"]))
