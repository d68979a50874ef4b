"""Slotted flow-level simulation of matching-based long-message scheduling.

Time is divided into slots of ``slot_duration`` seconds. Within slot ``t``:

1. The matching computed during slot ``t - 1`` is used. It was built from
   the feasible graph (pairs with pending long bytes) as it stood at the
   start of slot ``t - 1``, so matching and transmission are pipelined and
   a pair may be matched after its backlog has already drained.
2. Short messages (at most one BDP) skip matching. They take strict
   priority on both their sender's uplink and their receiver's downlink;
   bytes that do not fit in the slot are carried over as per-host debt.
3. Each matched pair sends ``min(pending, residual sender budget,
   residual receiver budget)`` bytes, FIFO across the pair's messages.
4. Messages arriving during the slot are queued and become visible to the
   matching computed at the start of the next slot.

The core is non-blocking: only host links constrain service.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .graph import BipartiteGraph, ConfigError
from .matching import IslipState, SelectionRule, accept_grants, control_counts, islip_round, select_grants
from .rng import ACCEPT, ARRIVALS, GRANT, THIN, RngSeed, as_seed
from .thinning import ThinningPolicy, thin_with_generator

ALGORITHMS = ("2cgs", "1rdcpim", "islip")
STAGES = ("NOTIFY", "REQ", "GRANT", "ACCEPT")


# ---------------------------------------------------------------------------
# Workloads
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Workload:
    """Message-size law plus a target load.

    Synthetic workloads are mixtures: with probability ``p_short`` a
    log-uniform size on ``[short_min, 1]`` BDP, otherwise a bounded Pareto
    size on ``(1, long_max]`` BDP with the given shape. Empirical workloads
    carry an explicit pmf over sizes in bytes.
    """

    name: str
    load: float = 0.5
    p_short: float = 0.8
    short_min: float = 0.01
    long_max: float = 10.0
    pareto_shape: float = 1.1
    sizes: tuple[float, ...] | None = None
    probs: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0.0 <= self.load < 1.0:
            raise ConfigError(f"load must lie in [0, 1), got {self.load}")
        if self.sizes is None:
            if not 0.0 <= self.p_short <= 1.0:
                raise ConfigError("p_short must lie in [0, 1]")
            if not 0.0 < self.short_min < 1.0 or self.long_max <= 1.0 or self.pareto_shape <= 0:
                raise ConfigError("invalid synthetic size parameters")
        else:
            if len(self.sizes) != len(self.probs) or not self.sizes:
                raise ConfigError("empirical workload needs matching, non-empty size and probability lists")
            if min(self.sizes) <= 0 or min(self.probs) < 0:
                raise ConfigError("sizes must be positive and probabilities non-negative")
            if abs(math.fsum(self.probs) - 1.0) > 1e-6:
                raise ConfigError(f"probabilities sum to {math.fsum(self.probs)}, not 1")

    @classmethod
    def imc10_like(cls, load: float = 0.5) -> "Workload":
        return cls("imc10-like", load, p_short=0.8, long_max=10.0)

    @classmethod
    def sgd_like(cls, load: float = 0.5) -> "Workload":
        return cls("sgd-like", load, p_short=0.6, long_max=40.0)

    @classmethod
    def from_file(cls, path: str | Path, load: float = 0.5) -> "Workload":
        """Read ``<size_bytes> <probability>`` lines; ``#`` starts a comment."""
        sizes, probs = [], []
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read workload file {path}: {exc}") from exc
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if len(parts) != 2:
                    raise ValueError
                sizes.append(float(parts[0]))
                probs.append(float(parts[1]))
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: expected '<size_bytes> <probability>'") from None
        total = math.fsum(probs)
        if abs(total - 1.0) <= 1e-6:
            probs = [p / total for p in probs]
        return cls(f"file:{path}", load, sizes=tuple(sizes), probs=tuple(probs))

    @classmethod
    def parse(cls, text: str, load: float = 0.5) -> "Workload":
        if text == "imc10-like":
            return cls.imc10_like(load)
        if text == "sgd-like":
            return cls.sgd_like(load)
        if text.startswith("file:"):
            return cls.from_file(text[5:], load)
        raise ConfigError(f"unknown workload {text!r}; expected imc10-like, sgd-like or file:<path>")

    def with_load(self, load: float) -> "Workload":
        return replace(self, load=load)

    # -- size law -----------------------------------------------------------

    def _short_mean(self) -> float:
        a = self.short_min
        return (1.0 - a) / math.log(1.0 / a)

    def _long_mean(self) -> float:
        s, h = self.pareto_shape, self.long_max
        norm = s / -math.expm1(-s * math.log(h))  # s / (1 - h**-s)
        if abs(s - 1.0) < 1e-12:
            return norm * math.log(h)
        return norm * (h ** (1.0 - s) - 1.0) / (1.0 - s)

    def mean_size(self, bdp: float) -> float:
        """Exact mean message size in bytes."""
        if self.sizes is not None:
            return math.fsum(s * p for s, p in zip(self.sizes, self.probs))
        return bdp * (self.p_short * self._short_mean() + (1.0 - self.p_short) * self._long_mean())

    def short_byte_fraction(self, bdp: float) -> float:
        if self.sizes is not None:
            return math.fsum(s * p for s, p in zip(self.sizes, self.probs) if s <= bdp) / self.mean_size(bdp)
        return bdp * self.p_short * self._short_mean() / self.mean_size(bdp)

    def sample(self, gen: np.random.Generator, count: int, bdp: float) -> np.ndarray:
        if self.sizes is not None:
            return gen.choice(np.asarray(self.sizes), size=count, p=np.asarray(self.probs))
        u = gen.random(count)
        w = gen.random(count)
        short = u < self.p_short
        out = np.empty(count)
        a = self.short_min
        out[short] = a ** (1.0 - w[short])
        # Inverse cdf of the Pareto(shape) law truncated to (1, long_max].
        s, h = self.pareto_shape, self.long_max
        tail = -math.expm1(-s * math.log(h))
        out[~short] = (1.0 - w[~short] * tail) ** (-1.0 / s)
        return out * bdp

    def pair_rate(self, fabric: "FabricConfig") -> float:
        """Per-pair message arrival rate (per second) giving the target load."""
        return self.load * fabric.link_rate / (fabric.n_hosts * self.mean_size(fabric.bdp))


# ---------------------------------------------------------------------------
# Fabric and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FabricConfig:
    n_hosts: int = 144
    link_rate: float = 12.5e9  # bytes per second (100 Gb/s)
    base_rtt: float = 4e-6
    slot_duration: float = 4e-6
    algorithm: str = "2cgs"
    horizon: int = 4000
    warmup: int = 1000

    def __post_init__(self):
        if self.n_hosts < 1:
            raise ConfigError("n_hosts must be at least 1")
        if self.link_rate <= 0 or self.base_rtt <= 0:
            raise ConfigError("link_rate and base_rtt must be positive")
        if self.slot_duration < self.base_rtt * (1 - 1e-12):
            raise ConfigError("slot_duration must be at least base_rtt")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {', '.join(ALGORITHMS)}")
        if not 0 <= self.warmup < self.horizon:
            raise ConfigError("need 0 <= warmup < horizon")

    @property
    def bdp(self) -> float:
        return self.link_rate * self.base_rtt

    @property
    def slot_bytes(self) -> float:
        return self.link_rate * self.slot_duration


@dataclass
class RunSummary:
    fabric: FabricConfig
    workload: Workload
    matched: np.ndarray  # per slot, pairs in the matching
    busy: np.ndarray  # per slot, matched pairs that moved bytes
    served: np.ndarray  # per slot, bytes delivered (short and long)
    backlog: np.ndarray  # per slot end, queued long bytes plus short debt
    arrived_bytes: float
    served_bytes: float
    control: dict[str, int]
    fct: dict[str, np.ndarray] = field(repr=False)  # normalized FCT per class
    long_done: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)  # completion times

    def _post(self, a: np.ndarray) -> np.ndarray:
        return a[self.fabric.warmup :]

    @property
    def matching_fraction(self) -> float:
        return float(self._post(self.matched).mean()) / self.fabric.n_hosts

    @property
    def throughput(self) -> float:
        f = self.fabric
        return float(self._post(self.served).sum()) / (f.n_hosts * f.slot_bytes * (f.horizon - f.warmup))

    def backlog_slope(self) -> float:
        """Least-squares backlog growth per slot over the final third, in units of n_hosts * slot bytes."""
        f = self.fabric
        tail = self.backlog[-max(f.horizon // 3, 2) :]
        slope = np.polyfit(np.arange(tail.size, dtype=float), tail, 1)[0]
        return float(slope) / (f.n_hosts * f.slot_bytes)

    def fct_growth(self) -> float:
        """Mean normalized long FCT of completions in the last third of the
        measured window over that of the first third. Stays near 1 when the
        system is stable and keeps growing with the horizon when it is not."""
        f = self.fabric
        t0 = f.warmup * f.slot_duration
        third = (f.horizon - f.warmup) * f.slot_duration / 3
        vals = self.fct["long"]
        early = vals[self.long_done < t0 + third]
        late = vals[self.long_done >= t0 + 2 * third]
        if early.size == 0 or late.size == 0:
            return math.nan
        return float(late.mean() / early.mean())

    def fct_stats(self) -> dict[str, dict[str, float]]:
        out = {}
        for cls, vals in self.fct.items():
            if vals.size:
                p50, p99 = np.percentile(vals, [50, 99])
                out[cls] = {"count": int(vals.size), "mean": float(vals.mean()), "p50": float(p50), "p99": float(p99)}
            else:
                out[cls] = {"count": 0, "mean": math.nan, "p50": math.nan, "p99": math.nan}
        return out

    def slots_csv(self) -> str:
        lines = ["slot,matched,served_bytes,backlog"]
        for t in range(self.matched.size):
            lines.append(f"{t},{int(self.matched[t])},{self.served[t]:.10g},{self.backlog[t]:.10g}")
        return "\n".join(lines) + "\n"

    def summary_text(self) -> str:
        from .experiments import fmt

        f = self.fabric
        lines = [
            f"algorithm {f.algorithm}",
            f"workload {self.workload.name}",
            f"load {fmt(self.workload.load)}",
            f"matching_fraction {fmt(self.matching_fraction)}",
            f"throughput {fmt(self.throughput)}",
            f"backlog_slope {fmt(self.backlog_slope())}",
        ]
        for cls, st in self.fct_stats().items():
            lines.append(f"fct_{cls} count={st['count']} mean={fmt(st['mean'])} p50={fmt(st['p50'])} p99={fmt(st['p99'])}")
        for stage in STAGES:
            lines.append(f"control_{stage} {self.control[stage]}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


class _Matcher:
    """Per-slot matching for one of the three compared algorithms."""

    def __init__(self, algorithm: str, n: int, seed: RngSeed):
        self.algorithm = algorithm
        self.islip = IslipState.fresh(n) if algorithm == "islip" else None
        self.thin_gen = seed.generator(THIN)
        self.grant_gen = seed.generator(GRANT)
        self.accept_gen = seed.generator(ACCEPT)
        self.thinning = ThinningPolicy.max_k(2)
        self.rule = SelectionRule.greedy() if algorithm == "2cgs" else SelectionRule.uniform()

    def __call__(self, g: BipartiteGraph) -> tuple[list[tuple[int, int]], dict[str, int]]:
        if self.algorithm == "islip":
            res = islip_round(g, self.islip)
            return res.pairs, res.control_counts
        if self.algorithm == "2cgs":
            g = thin_with_generator(g, self.thinning, self.thin_gen)
        grants = select_grants(g, self.rule, self.grant_gen.random(g.n_senders))
        pairs = accept_grants(grants, self.accept_gen.random(g.n_receivers))
        return pairs, control_counts(g, len(pairs))


def _feasible_graph(pending: np.ndarray) -> BipartiteGraph:
    n = pending.shape[0]
    rows, cols = np.nonzero(pending > 0)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return BipartiteGraph(n, n, indptr, cols, check=False)


def run_dynsim(fabric: FabricConfig, workload: Workload, rng: "RngSeed | int | None" = None) -> RunSummary:
    """Simulate ``fabric.horizon`` slots and return per-slot and aggregate metrics."""
    seed = as_seed(rng)
    n, T = fabric.n_hosts, fabric.slot_duration
    R, B = fabric.link_rate, fabric.slot_bytes
    bdp, rtt = fabric.bdp, fabric.base_rtt
    arrivals_gen = seed.generator(ARRIVALS)
    matcher = _Matcher(fabric.algorithm, n, seed)
    slot_rate = workload.pair_rate(fabric) * T * n * n if workload.load > 0 else 0.0

    pending = np.zeros((n, n))  # queued long bytes per pair
    queues: dict[int, deque] = {}  # pair -> FIFO of [arrival_time, remaining, size]
    debt_out = np.zeros(n)
    debt_in = np.zeros(n)
    matched = np.zeros(fabric.horizon, dtype=np.int64)
    busy = np.zeros(fabric.horizon, dtype=np.int64)
    served = np.zeros(fabric.horizon)
    backlog = np.zeros(fabric.horizon)
    control = dict.fromkeys(STAGES, 0)
    fct_long: list[float] = []
    long_done: list[float] = []
    fct_short: list[np.ndarray] = []
    arrived_bytes = served_bytes = 0.0
    current: list[tuple[int, int]] = []
    t_warm = fabric.warmup * T

    for t in range(fabric.horizon):
        start = t * T
        post = t >= fabric.warmup

        # Matching for the next slot, computed from the state at the start of this one.
        nxt, counts = matcher(_feasible_graph(pending))
        if post:
            for k in STAGES:
                control[k] += counts[k]

        # Arrivals during this slot.
        count = arrivals_gen.poisson(slot_rate) if slot_rate > 0 else 0
        pair = arrivals_gen.integers(0, n * n, size=count)
        when = start + T * arrivals_gen.random(count)
        size = workload.sample(arrivals_gen, count, bdp)
        arrived_bytes += float(size.sum()) if post else 0.0
        is_short = size <= bdp
        src, dst = np.divmod(pair, n)

        # Short messages: strict priority, carry-over debt per link end.
        s_src, s_dst, s_size, s_when = src[is_short], dst[is_short], size[is_short], when[is_short]
        wait = np.maximum(debt_out[s_src], debt_in[s_dst]) / R
        if post:
            keep = s_when >= t_warm
            opt = s_size[keep] / R + rtt
            fct_short.append((opt + wait[keep]) / opt)
        np.add.at(debt_out, s_src, s_size)
        np.add.at(debt_in, s_dst, s_size)
        short_out = np.minimum(debt_out, B)
        short_in = np.minimum(debt_in, B)
        debt_out -= short_out
        debt_in -= short_in
        slot_served = float(short_out.sum())

        # Long transfers over the current matching.
        out_left = B - short_out
        in_left = B - short_in
        n_busy = 0
        for u, v in current:
            key = u * n + v
            budget = min(out_left[u], in_left[v], pending[u, v])
            if budget <= 0:
                continue
            n_busy += 1
            offset = max(short_out[u], short_in[v])
            sent = 0.0
            q = queues[key]
            while q and sent < budget:
                msg = q[0]
                take = min(msg[1], budget - sent)
                msg[1] -= take
                sent += take
                if msg[1] <= 1e-9:
                    q.popleft()
                    if msg[0] >= t_warm:
                        done = start + (offset + sent) / R
                        fct_long.append((done - msg[0]) / (msg[2] / R + rtt))
                        long_done.append(done)
            if not q:
                del queues[key]
                pending[u, v] = 0.0
            else:
                pending[u, v] -= sent
            out_left[u] -= sent
            in_left[v] -= sent
            slot_served += sent

        # Long arrivals join their pair queues, in time order.
        long_idx = np.flatnonzero(~is_short)
        long_idx = long_idx[np.argsort(when[long_idx], kind="stable")]
        for i in long_idx.tolist():
            key = int(pair[i])
            queues.setdefault(key, deque()).append([float(when[i]), float(size[i]), float(size[i])])
            pending[src[i], dst[i]] += size[i]

        matched[t] = len(current)
        busy[t] = n_busy
        served[t] = slot_served
        if post:
            served_bytes += slot_served
        backlog[t] = float(pending.sum() + debt_out.sum())
        current = nxt

    fct = {
        "short": np.concatenate(fct_short) if fct_short else np.zeros(0),
        "long": np.asarray(fct_long),
    }
    if workload.load > 0 and fct["long"].size == 0 and fct["short"].size == 0:
        warnings.warn("no message completed after warmup; increase the horizon", RuntimeWarning, stacklevel=2)
    return RunSummary(
        fabric, workload, matched, busy, served, backlog, arrived_bytes, served_bytes, control, fct, np.asarray(long_done)
    )


# ---------------------------------------------------------------------------
# Sweeps and summaries
# ---------------------------------------------------------------------------

STAB_EPS = 0.005
FCT_BLOWUP = 1.5


@dataclass(frozen=True)
class LoadPoint:
    """Aggregate metrics of one (algorithm, load) simulation."""

    algorithm: str
    load: float
    matching_fraction: float
    throughput: float
    backlog_slope: float
    fct_short_mean: float
    fct_long_mean: float
    fct_long_p99: float
    fct_growth: float
    control_per_slot: dict
    stable: bool

    @property
    def fct_blowup(self) -> bool:
        return self.fct_growth > FCT_BLOWUP


def is_stable(summary: RunSummary, eps: float = STAB_EPS) -> bool:
    """Served rate within ``eps`` of the offered load and no backlog growth."""
    return summary.throughput >= summary.workload.load - eps and summary.backlog_slope() <= eps


def summarize_run(s: RunSummary) -> LoadPoint:
    st = s.fct_stats()
    slots = s.fabric.horizon - s.fabric.warmup
    return LoadPoint(
        s.fabric.algorithm,
        s.workload.load,
        s.matching_fraction,
        s.throughput,
        s.backlog_slope(),
        st["short"]["mean"],
        st["long"]["mean"],
        st["long"]["p99"],
        s.fct_growth(),
        {k: v / slots for k, v in control_message_census(s).items()},
        is_stable(s),
    )


def _point_task(args) -> LoadPoint:
    fabric, workload, seed = args
    return summarize_run(run_dynsim(fabric, workload, seed))


def load_sweep(
    fabric: FabricConfig,
    workload: Workload,
    loads,
    algorithms=ALGORITHMS,
    rng: "RngSeed | int | None" = None,
    workers: int = 1,
) -> list[LoadPoint]:
    """One simulation per (algorithm, load), all sharing the same seed.

    The arrival stream has its own generator, so every algorithm sees the
    same messages at a given load. Runs are independent, so the result does
    not depend on ``workers``.
    """
    loads = [float(x) for x in loads]
    if any(not 0.0 < x < 1.0 for x in loads):
        raise ConfigError("loads must lie in (0, 1)")
    seed = as_seed(rng)
    tasks = [(replace(fabric, algorithm=a), workload.with_load(x), seed) for a in algorithms for x in loads]
    if workers <= 1 or len(tasks) == 1:
        return [_point_task(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_point_task, tasks))


def stability_sweep(
    fabric: FabricConfig,
    workload: Workload,
    loads,
    rng: "RngSeed | int | None" = None,
    workers: int = 1,
) -> list[LoadPoint]:
    """Stability flag of ``fabric.algorithm`` at each load."""
    return load_sweep(fabric, workload, loads, (fabric.algorithm,), rng, workers)


def max_stable_load(points: list[LoadPoint]) -> float:
    """Largest grid load up to which every point is stable (0 if the first is not)."""
    best = 0.0
    for p in sorted(points, key=lambda r: r.load):
        if not p.stable:
            break
        best = p.load
    return best


POINT_COLUMNS = (
    "algorithm,load,matching_fraction,throughput,backlog_slope,fct_short_mean,"
    "fct_long_mean,fct_long_p99,fct_growth,notify,req,grant,accept,stable"
)


def points_csv(points: list[LoadPoint]) -> str:
    from .experiments import fmt

    lines = [POINT_COLUMNS]
    for p in points:
        vals = [p.algorithm] + [
            fmt(v)
            for v in (
                p.load,
                p.matching_fraction,
                p.throughput,
                p.backlog_slope,
                p.fct_short_mean,
                p.fct_long_mean,
                p.fct_long_p99,
                p.fct_growth,
                *(p.control_per_slot[k] for k in STAGES),
            )
        ]
        lines.append(",".join(vals + [str(int(p.stable))]))
    return "\n".join(lines) + "\n"


def control_message_census(summary: RunSummary) -> dict[str, int]:
    """Post-warmup totals of control messages per protocol stage."""
    return dict(summary.control)
