"""One-round NOTIFY / REQ / GRANT / ACCEPT matching.

Every sender with a non-empty neighbourhood in the intention graph issues a
single grant, chosen by a degree-biased rule; every receiver holding at least
one grant accepts exactly one of them uniformly at random. The module also
carries two baselines: a single iteration of round-robin iSLIP and the
omniscient maximum matching (Hopcroft-Karp).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .graph import BipartiteGraph, ConfigError
from .rng import ACCEPT, GRANT, RngSeed, as_seed

STAGES = ("NOTIFY", "REQ", "GRANT", "ACCEPT")


@dataclass(frozen=True)
class SelectionRule:
    """Grant rule DB(alpha). ``greedy`` is the exact alpha -> -inf limit."""

    kind: str = "alpha"  # "alpha" | "greedy"
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in ("alpha", "greedy"):
            raise ConfigError(f"unknown selection rule {self.kind!r}")
        if self.kind == "alpha":
            if math.isnan(self.alpha) or self.alpha > 0:
                raise ConfigError(f"alpha must be a real number <= 0, got {self.alpha}")
            if self.alpha == -math.inf:
                object.__setattr__(self, "kind", "greedy")

    @classmethod
    def db(cls, alpha: float) -> "SelectionRule":
        return cls("alpha", float(alpha))

    @classmethod
    def uniform(cls) -> "SelectionRule":
        return cls("alpha", 0.0)

    @classmethod
    def greedy(cls) -> "SelectionRule":
        return cls("greedy", -math.inf)

    @classmethod
    def parse(cls, text: str) -> "SelectionRule":
        text = text.strip()
        if text == "uniform":
            return cls.uniform()
        if text == "greedy":
            return cls.greedy()
        if text.startswith("db:"):
            try:
                return cls.db(float(text[3:]))
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"malformed rule {text!r}") from exc
        raise ConfigError(f"unknown rule {text!r}; expected db:<alpha>, uniform or greedy")

    @property
    def is_greedy(self) -> bool:
        return self.kind == "greedy"

    def label(self) -> str:
        return "greedy" if self.is_greedy else f"db:{self.alpha!r}"


@dataclass
class MatchResult:
    n: int
    pairs: list[tuple[int, int]]
    grants: np.ndarray  # receiver granted by each sender, -1 for none
    control_counts: dict[str, int] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.pairs)

    @property
    def matched_fraction(self) -> float:
        return len(self.pairs) / self.n if self.n else 0.0

    def as_dict(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "matched_fraction": self.matched_fraction,
            "control_counts": dict(self.control_counts),
        }


# ---------------------------------------------------------------------------
# Grant probabilities
# ---------------------------------------------------------------------------


def db_grant_pmf(g: BipartiteGraph, u: int, alpha: float) -> np.ndarray | None:
    """Grant distribution of sender ``u`` over its sorted neighbourhood.

    Returns ``None`` (no grant) for a sender without neighbours. Finite
    ``alpha`` is evaluated as a softmax of ``alpha * ln deg(v)``;
    ``alpha = -inf`` gives the uniform law on minimum-degree neighbours.
    """
    nb = g.neighbors(u)
    if nb.size == 0:
        return None
    deg = g.receiver_degrees()[nb]
    if alpha == -math.inf:
        w = (deg == deg.min()).astype(float)
        return w / w.sum()
    x = alpha * np.log(deg)
    w = np.exp(x - x.max())
    return w / w.sum()


def _segment_starts(g: BipartiteGraph) -> tuple[np.ndarray, np.ndarray]:
    deg = g.out_degrees()
    active = deg > 0
    return g.indptr[:-1][active], active


def select_grants(g: BipartiteGraph, rule: SelectionRule, draws: np.ndarray) -> np.ndarray:
    """Sample each sender's grant by inverse CDF from its uniform ``draws[u]``.

    Returns the granted receiver per sender, ``-1`` where the sender has no
    neighbours. The same draws under different rules give common random
    numbers across rules.
    """
    if rule.is_greedy:
        return _greedy_grants(g, draws)
    return select_grants_alphas(g, np.array([rule.alpha]), draws)[0]


def _greedy_grants(g: BipartiteGraph, draws: np.ndarray) -> np.ndarray:
    grants = np.full(g.n_senders, -1, dtype=np.int64)
    if g.n_edges == 0:
        return grants
    starts, active = _segment_starts(g)
    seg = np.repeat(np.arange(starts.size), g.out_degrees()[active])
    rdeg = g.receiver_degrees()[g.indices]
    segmin = np.minimum.reduceat(rdeg, starts)
    tie = rdeg == segmin[seg]
    n_tie = np.bincount(seg, weights=tie, minlength=starts.size).astype(np.int64)
    pick = np.minimum((draws[active] * n_tie).astype(np.int64), n_tie - 1)
    ct = np.cumsum(tie)
    before = ct[starts] - tie[starts]
    chosen = tie & (ct - 1 - before[seg] == pick[seg])
    grants[active] = g.indices[chosen]
    return grants


def select_grants_alphas(g: BipartiteGraph, alphas: np.ndarray, draws: np.ndarray) -> np.ndarray:
    """DB(alpha) grants for several finite exponents at once, one row per alpha.

    Row ``i`` is exactly what :func:`select_grants` returns for
    ``alphas[i]`` with the same draws.
    """
    alphas = np.asarray(alphas, dtype=float)
    grants = np.full((alphas.size, g.n_senders), -1, dtype=np.int64)
    if g.n_edges == 0:
        return grants
    starts, active = _segment_starts(g)
    deg_out = g.out_degrees()[active]
    nseg = starts.size
    seg = np.repeat(np.arange(nseg), deg_out)
    logdeg = np.log(g.receiver_degrees()[g.indices])

    x = alphas[:, None] * logdeg[None, :]
    w = np.exp(x - np.maximum.reduceat(x, starts, axis=1)[:, seg])
    cw = np.cumsum(w, axis=1)
    within = cw - (cw[:, starts] - w[:, starts])[:, seg]
    total = within[:, starts + deg_out - 1]
    below = within <= (draws[active][None, :] * total)[:, seg]
    # per-row segment counts via a flattened bincount
    flat = (np.arange(alphas.size)[:, None] * nseg + seg[None, :]).ravel()
    counts = np.bincount(flat, weights=below.ravel(), minlength=alphas.size * nseg)
    pick = np.minimum(counts.reshape(alphas.size, nseg).astype(np.int64), deg_out - 1)
    grants[:, active] = g.indices[starts[None, :] + pick]
    return grants


def count_granted(grants: np.ndarray, n_receivers: int) -> np.ndarray:
    """Number of distinct granted receivers, i.e. the matching size, per row."""
    grants = np.atleast_2d(grants)
    hit = np.zeros((grants.shape[0], n_receivers + 1), dtype=bool)
    hit[np.arange(grants.shape[0])[:, None], grants] = True  # -1 lands in the spare column
    return hit[:, :n_receivers].sum(axis=1)


def accept_grants(grants: np.ndarray, draws: np.ndarray) -> list[tuple[int, int]]:
    """Each granted receiver ``v`` keeps one grant, chosen with ``draws[v]``."""
    senders = np.flatnonzero(grants >= 0)
    if senders.size == 0:
        return []
    recv = grants[senders]
    order = np.lexsort((senders, recv))
    s_sorted, r_sorted = senders[order], recv[order]
    counts = np.bincount(r_sorted)
    first = np.concatenate(([0], np.cumsum(counts)[:-1]))
    rank = np.arange(s_sorted.size) - first[r_sorted]
    pick = np.minimum((draws[r_sorted] * counts[r_sorted]).astype(np.int64), counts[r_sorted] - 1)
    keep = rank == pick
    return sorted(zip(s_sorted[keep].tolist(), r_sorted[keep].tolist()))


def control_counts(g: BipartiteGraph, n_pairs: int) -> dict[str, int]:
    # Receiver degrees ride on the REQ messages, so they cost nothing extra.
    return {
        "NOTIFY": g.n_edges,
        "REQ": g.n_edges,
        "GRANT": int(np.count_nonzero(g.out_degrees())),
        "ACCEPT": n_pairs,
    }


def round_with_draws(
    g: BipartiteGraph, rule: SelectionRule, grant_draws: np.ndarray, accept_draws: np.ndarray
) -> MatchResult:
    grants = select_grants(g, rule, grant_draws)
    pairs = accept_grants(grants, accept_draws)
    return MatchResult(g.n_receivers, pairs, grants, control_counts(g, len(pairs)))


def round_draws(g: BipartiteGraph, rng: "RngSeed | int | None") -> tuple[np.ndarray, np.ndarray]:
    seed = as_seed(rng)
    return seed.generator(GRANT).random(g.n_senders), seed.generator(ACCEPT).random(g.n_receivers)


def run_round(g: BipartiteGraph, rule: SelectionRule, rng: "RngSeed | int | None" = None) -> MatchResult:
    """Run one matching round of ``rule`` on the intention graph ``g``."""
    grant_draws, accept_draws = round_draws(g, rng)
    return round_with_draws(g, rule, grant_draws, accept_draws)


# ---------------------------------------------------------------------------
# iSLIP
# ---------------------------------------------------------------------------


@dataclass
class IslipState:
    grant_ptr: np.ndarray  # per receiver
    accept_ptr: np.ndarray  # per sender

    @classmethod
    def fresh(cls, n_senders: int, n_receivers: int | None = None) -> "IslipState":
        if n_receivers is None:
            n_receivers = n_senders
        return cls(np.zeros(n_receivers, dtype=np.int64), np.zeros(n_senders, dtype=np.int64))

    def copy(self) -> "IslipState":
        return IslipState(self.grant_ptr.copy(), self.accept_ptr.copy())


def _first_after(owner: np.ndarray, cand: np.ndarray, ptr: np.ndarray, modulus: int) -> tuple[np.ndarray, np.ndarray]:
    """For each distinct owner, the candidate nearest at-or-after ``ptr[owner]`` cyclically."""
    dist = (cand - ptr[owner]) % modulus
    order = np.argsort(owner * modulus + dist, kind="stable")
    o = owner[order]
    first = np.ones(o.size, dtype=bool)
    first[1:] = o[1:] != o[:-1]
    return o[first], cand[order][first]


def islip_round(g: BipartiteGraph, state: IslipState) -> MatchResult:
    """One request/grant/accept iteration of iSLIP; updates ``state`` in place.

    Receivers grant the first requesting sender at or after their grant
    pointer; senders accept the first granting receiver at or after their
    accept pointer. A receiver whose grant is accepted moves its pointer one
    past that sender. A sender that accepts moves one past the accepted
    receiver; a sender that requested but got no grant moves on by one.
    """
    ns, nr = g.n_senders, g.n_receivers
    grants = np.full(ns, -1, dtype=np.int64)
    if g.n_edges == 0:
        return MatchResult(nr, [], grants, {"NOTIFY": 0, "REQ": 0, "GRANT": 0, "ACCEPT": 0})
    senders = g.edge_senders()
    g_recv, g_send = _first_after(g.indices, senders, state.grant_ptr, ns)
    a_send, a_recv = _first_after(g_send, g_recv, state.accept_ptr, nr)

    state.grant_ptr[a_recv] = (a_send + 1) % ns
    requested = g.out_degrees() > 0
    no_grant = requested.copy()
    no_grant[g_send] = False
    state.accept_ptr[no_grant] = (state.accept_ptr[no_grant] + 1) % nr
    state.accept_ptr[a_send] = (a_recv + 1) % nr

    grants[a_send] = a_recv
    pairs = sorted(zip(a_send.tolist(), a_recv.tolist()))
    # iSLIP has no separate reply stage: its requests are counted as NOTIFY.
    counts = {"NOTIFY": g.n_edges, "REQ": 0, "GRANT": int(g_recv.size), "ACCEPT": len(pairs)}
    return MatchResult(nr, pairs, grants, counts)


# ---------------------------------------------------------------------------
# Maximum matching
# ---------------------------------------------------------------------------


def max_matching(g: BipartiteGraph) -> int:
    """Cardinality of a maximum matching (Hopcroft-Karp, O(E sqrt(V)))."""
    return len(hopcroft_karp(g))


def hopcroft_karp(g: BipartiteGraph) -> dict[int, int]:
    """Return a maximum matching as ``{sender: receiver}``."""
    ns = g.n_senders
    indptr = g.indptr.tolist()
    indices = g.indices.tolist()
    match_s = [-1] * ns
    match_r = [-1] * g.n_receivers
    inf = ns + 1

    # Greedy warm start shortens the phase count considerably.
    for u in range(ns):
        for v in indices[indptr[u] : indptr[u + 1]]:
            if match_r[v] < 0:
                match_s[u] = v
                match_r[v] = u
                break

    while True:
        dist = [inf] * ns
        queue = deque(u for u in range(ns) if match_s[u] < 0)
        for u in queue:
            dist[u] = 0
        found = inf
        while queue:
            u = queue.popleft()
            if dist[u] >= found:
                continue
            for v in indices[indptr[u] : indptr[u + 1]]:
                w = match_r[v]
                if w < 0:
                    found = min(found, dist[u] + 1)
                elif dist[w] == inf:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        if found == inf:
            break

        ptr = indptr[:-1].copy()
        for root in range(ns):
            if match_s[root] >= 0:
                continue
            # Iterative DFS along the layered graph.
            stack = [root]
            path_v: list[int] = []
            while stack:
                u = stack[-1]
                advanced = False
                while ptr[u] < indptr[u + 1]:
                    v = indices[ptr[u]]
                    ptr[u] += 1
                    w = match_r[v]
                    if w < 0:
                        if dist[u] + 1 == found:
                            path_v.append(v)
                            for x, y in zip(stack, path_v):
                                match_s[x] = y
                                match_r[y] = x
                            stack = []
                            advanced = True
                            break
                    elif dist[w] == dist[u] + 1:
                        path_v.append(v)
                        stack.append(w)
                        advanced = True
                        break
                if not advanced:
                    dist[u] = inf
                    stack.pop()
                    if path_v:
                        path_v.pop()
    return {u: v for u, v in enumerate(match_s) if v >= 0}
