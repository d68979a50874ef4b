"""Sender-side thinning of a feasible graph into an intention graph."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import BipartiteGraph, ConfigError
from .rng import THIN, RngSeed, as_seed


@dataclass(frozen=True)
class ThinningPolicy:
    kind: str = "none"  # "none" | "bern" | "max"
    q: float = 1.0
    k: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "bern", "max"):
            raise ConfigError(f"unknown thinning kind {self.kind!r}")
        if self.kind == "bern" and not 0.0 <= self.q <= 1.0:
            raise ConfigError(f"Bernoulli thinning needs 0 <= q <= 1, got {self.q}")
        if self.kind == "max" and self.k < 1:
            raise ConfigError(f"max(k) thinning needs k >= 1, got {self.k}")

    @classmethod
    def none(cls) -> "ThinningPolicy":
        return cls("none")

    @classmethod
    def bernoulli(cls, q: float) -> "ThinningPolicy":
        return cls("bern", q=float(q))

    @classmethod
    def max_k(cls, k: int) -> "ThinningPolicy":
        return cls("max", k=int(k))

    @classmethod
    def parse(cls, text: str) -> "ThinningPolicy":
        """Parse ``none``, ``bern:<q>`` or ``max:<k>``."""
        kind, _, arg = text.strip().partition(":")
        try:
            if kind == "none" and not arg:
                return cls.none()
            if kind == "bern":
                return cls.bernoulli(float(arg))
            if kind == "max":
                return cls.max_k(int(arg))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed thinning policy {text!r}") from exc
        raise ConfigError(f"unknown thinning policy {text!r}; expected none, bern:<q> or max:<k>")

    def label(self) -> str:
        if self.kind == "bern":
            return f"bern:{self.q!r}"
        if self.kind == "max":
            return f"max:{self.k}"
        return "none"


def thin(g: BipartiteGraph, policy: ThinningPolicy, rng: "RngSeed | int | None" = None) -> BipartiteGraph:
    """Apply ``policy`` to ``g``; the result keeps a subset of each neighbourhood."""
    if policy.kind == "none":
        return g
    if policy.kind == "bern" and policy.q == 1.0:
        return g
    return thin_with_generator(g, policy, as_seed(rng).generator(THIN))


def thin_with_generator(g: BipartiteGraph, policy: ThinningPolicy, gen: np.random.Generator) -> BipartiteGraph:
    """Like :func:`thin`, drawing from an existing generator (for long-running simulations)."""
    if policy.kind == "none":
        return g
    deg = g.out_degrees()
    if policy.kind == "bern":
        keep = gen.random(g.n_edges) < policy.q
    else:
        rows = np.flatnonzero(deg > policy.k)
        if rows.size == 0:
            return g
        keep = np.repeat(deg <= policy.k, deg)
        picks = _floyd_subsets(gen, deg[rows], policy.k)
        keep[(g.indptr[rows][:, None] + picks).ravel()] = True
    kept_deg = np.bincount(g.edge_senders()[keep], minlength=g.n_senders)
    indptr = np.zeros(g.n_senders + 1, dtype=np.int64)
    np.cumsum(kept_deg, out=indptr[1:])
    return BipartiteGraph(g.n_senders, g.n_receivers, indptr, g.indices[keep], check=False)


def _floyd_subsets(gen: np.random.Generator, d: np.ndarray, k: int) -> np.ndarray:
    """Uniform ``k``-subsets of ``range(d[i])`` for every row, by Floyd's algorithm."""
    u = gen.random((d.size, k))
    picks = np.empty((d.size, k), dtype=np.int64)
    for i in range(k):
        top = d - k + i
        t = (u[:, i] * (top + 1)).astype(np.int64)
        if i:
            seen = np.any(picks[:, :i] == t[:, None], axis=1)
            t[seen] = top[seen]
        picks[:, i] = t
    return picks
