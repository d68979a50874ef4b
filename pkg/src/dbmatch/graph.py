"""Bipartite graphs and the D-out random graph model.

Graphs are stored sender-major in compressed sparse row form: the receivers
adjacent to sender ``u`` are ``indices[indptr[u]:indptr[u + 1]]``, sorted
ascending. Instances are immutable once built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import special

from .rng import GRAPH, RngSeed, as_seed


class ConfigError(ValueError):
    """Raised for invalid user-supplied configuration."""


# ---------------------------------------------------------------------------
# Degree distributions
# ---------------------------------------------------------------------------

_KINDS = ("det", "bin", "pois", "emp")


@dataclass(frozen=True)
class DegreeSpec:
    """Law of the sender out-degree ``D``.

    Use the constructors :meth:`deterministic`, :meth:`binomial`,
    :meth:`poisson` and :meth:`empirical` rather than the raw fields.
    """

    kind: str
    d: int = 0
    n: int = 0
    p: float = 0.0
    lam: float = 0.0
    pmf_values: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown degree kind {self.kind!r}")
        if self.kind == "det" and self.d < 0:
            raise ConfigError("deterministic degree must be non-negative")
        if self.kind == "bin" and (self.n < 0 or not 0.0 <= self.p <= 1.0):
            raise ConfigError(f"invalid binomial parameters n={self.n}, p={self.p}")
        if self.kind == "pois" and not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise ConfigError(f"invalid Poisson mean {self.lam}")
        if self.kind == "emp":
            pmf = np.asarray(self.pmf_values, dtype=float)
            if pmf.ndim != 1 or pmf.size == 0 or np.any(pmf < 0):
                raise ConfigError("empirical pmf must be a non-empty vector of non-negative numbers")
            if abs(math.fsum(pmf) - 1.0) > 1e-12:
                raise ConfigError(f"empirical pmf sums to {math.fsum(pmf)!r}, not 1")

    @classmethod
    def deterministic(cls, d: int) -> "DegreeSpec":
        return cls("det", d=int(d))

    @classmethod
    def binomial(cls, n: int, p: float) -> "DegreeSpec":
        return cls("bin", n=int(n), p=float(p))

    @classmethod
    def poisson(cls, mean: float) -> "DegreeSpec":
        return cls("pois", lam=float(mean))

    @classmethod
    def empirical(cls, pmf: Sequence[float]) -> "DegreeSpec":
        return cls("emp", pmf_values=tuple(float(x) for x in pmf))

    @classmethod
    def parse(cls, text: str) -> "DegreeSpec":
        """Parse ``det:<d>``, ``bin:<n>,<p>``, ``pois:<m>`` or ``emp:<p0>,<p1>,...``."""
        kind, _, rest = text.strip().partition(":")
        try:
            if kind == "det":
                return cls.deterministic(int(rest))
            if kind == "bin":
                n, p = rest.split(",")
                return cls.binomial(int(n), float(p))
            if kind == "pois":
                return cls.poisson(float(rest))
            if kind == "emp":
                return cls.empirical([float(x) for x in rest.split(",")])
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed degree spec {text!r}") from exc
        raise ConfigError(f"unknown degree spec {text!r}; expected det:, bin:, pois: or emp:")

    def label(self) -> str:
        if self.kind == "det":
            return f"det:{self.d}"
        if self.kind == "bin":
            return f"bin:{self.n},{self.p!r}"
        if self.kind == "pois":
            return f"pois:{self.lam!r}"
        return "emp:" + ",".join(repr(x) for x in self.pmf_values)

    # -- moments and generating function -----------------------------------

    def mean(self) -> float:
        if self.kind == "det":
            return float(self.d)
        if self.kind == "bin":
            return self.n * self.p
        if self.kind == "pois":
            return self.lam
        pmf = np.asarray(self.pmf_values)
        return math.fsum(pmf * np.arange(pmf.size))

    def prob_zero(self) -> float:
        if self.kind == "det":
            return 1.0 if self.d == 0 else 0.0
        if self.kind == "bin":
            return (1.0 - self.p) ** self.n
        if self.kind == "pois":
            return math.exp(-self.lam)
        return self.pmf_values[0]

    def pmf(self, kmax: int) -> np.ndarray:
        """``P{D = k}`` for ``k = 0..kmax``."""
        k = np.arange(kmax + 1)
        if self.kind == "det":
            return (k == self.d).astype(float)
        if self.kind == "bin":
            return binomial_pmf(k, self.n, self.p)
        if self.kind == "pois":
            return poisson_pmf(k, self.lam)
        out = np.zeros(kmax + 1)
        m = min(kmax + 1, len(self.pmf_values))
        out[:m] = self.pmf_values[:m]
        return out

    def pgf(self, z: float) -> float:
        """``G_D(z) = E[z^D]``."""
        if self.kind == "det":
            return z**self.d
        if self.kind == "bin":
            return (1.0 - self.p + self.p * z) ** self.n
        if self.kind == "pois":
            return math.exp(-self.lam * (1.0 - z))
        return math.fsum(p * z**k for k, p in enumerate(self.pmf_values))

    def pgf_slope(self, z1: float, z2: float) -> float:
        """``(G_D(z1) - G_D(z2)) / (z1 - z2)`` without cancellation.

        Uses ``z1**k - z2**k = (z1 - z2) * sum_j z1**j * z2**(k-1-j)``; at
        ``z1 == z2`` this is the derivative.
        """
        if self.kind == "pois":
            dz = z1 - z2
            base = math.exp(-self.lam * (1.0 - z2))
            if dz == 0.0:
                return self.lam * base
            return base * math.expm1(self.lam * dz) / dz
        if self.kind == "det":
            return _power_sum(z1, z2, self.d)
        if self.kind == "bin":
            a = 1.0 - self.p + self.p * z1
            b = 1.0 - self.p + self.p * z2
            return self.p * _power_sum(a, b, self.n)
        terms = _power_sums(z1, z2, len(self.pmf_values) - 1)
        return math.fsum(np.asarray(self.pmf_values) * terms)

    # -- sampling ------------------------------------------------------------

    def sample(self, gen: np.random.Generator, size: int, cap: int | None = None) -> np.ndarray:
        """Draw ``size`` iid degrees, truncated at ``cap`` when given."""
        if self.kind == "det":
            out = np.full(size, self.d, dtype=np.int64)
        elif self.kind == "bin":
            out = gen.binomial(self.n, self.p, size=size).astype(np.int64)
        elif self.kind == "pois":
            out = gen.poisson(self.lam, size=size).astype(np.int64)
        else:
            pmf = np.asarray(self.pmf_values)
            out = gen.choice(pmf.size, size=size, p=pmf / pmf.sum()).astype(np.int64)
        if cap is not None:
            np.minimum(out, cap, out=out)
        return out


def _power_sum(a: float, b: float, k: int) -> float:
    """``sum_{j<k} a**j * b**(k-1-j)``."""
    if k <= 0:
        return 0.0
    return float(_power_sums(a, b, k)[k])


def _power_sums(a: float, b: float, kmax: int) -> np.ndarray:
    # h[0] = 0, h[k+1] = a*h[k] + b**k
    h = np.zeros(kmax + 1)
    bk = 1.0
    for k in range(kmax):
        h[k + 1] = a * h[k] + bk
        bk *= b
    return h


def binomial_pmf(k, n: int, p: float) -> np.ndarray:
    k = np.asarray(k)
    out = np.zeros(k.shape)
    inside = (k >= 0) & (k <= n)
    if p == 0.0:
        out[inside & (k == 0)] = 1.0
        return out
    if p == 1.0:
        out[inside & (k == n)] = 1.0
        return out
    kk = k[inside]
    logc = special.gammaln(n + 1) - special.gammaln(kk + 1) - special.gammaln(n - kk + 1)
    out[inside] = np.exp(logc + kk * math.log(p) + (n - kk) * math.log1p(-p))
    return out


def poisson_pmf(k, lam: float) -> np.ndarray:
    k = np.asarray(k)
    out = np.zeros(k.shape)
    inside = k >= 0
    if lam == 0.0:
        out[inside & (k == 0)] = 1.0
        return out
    kk = k[inside]
    out[inside] = np.exp(kk * math.log(lam) - lam - special.gammaln(kk + 1))
    return out


# ---------------------------------------------------------------------------
# Graphs
# ---------------------------------------------------------------------------


def _frozen(a) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.int64)
    arr.flags.writeable = False
    return arr


class BipartiteGraph:
    """Sender-indexed adjacency of a bipartite graph ``G = (U, V, E)``."""

    __slots__ = ("n_senders", "n_receivers", "indptr", "indices", "_rdeg")

    def __init__(self, n_senders: int, n_receivers: int, indptr, indices, *, check: bool = True):
        self.n_senders = int(n_senders)
        self.n_receivers = int(n_receivers)
        self.indptr = _frozen(indptr)
        self.indices = _frozen(indices)
        self._rdeg = None
        if check:
            self.validate()

    def validate(self) -> None:
        if self.indptr.shape != (self.n_senders + 1,) or self.indptr[0] != 0:
            raise ValueError("indptr has the wrong shape")
        if np.any(np.diff(self.indptr) < 0) or self.indptr[-1] != self.indices.size:
            raise ValueError("indptr is not a valid row pointer")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.n_receivers):
            raise ValueError("receiver index out of range")
        step = np.diff(self.indices)
        row_start = np.zeros(self.indices.size, dtype=bool)
        row_start[self.indptr[:-1][np.diff(self.indptr) > 0]] = True
        if np.any((step <= 0) & ~row_start[1:]):
            raise ValueError("neighbourhoods must be strictly increasing (sorted, no duplicates)")

    @classmethod
    def from_adjacency(cls, adj: Iterable[Iterable[int]], n_receivers: int | None = None) -> "BipartiteGraph":
        rows = [sorted(set(int(v) for v in nbrs)) for nbrs in adj]
        if n_receivers is None:
            n_receivers = len(rows)
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(r) for r in rows])
        indices = np.fromiter((v for r in rows for v in r), dtype=np.int64, count=int(indptr[-1]))
        return cls(len(rows), n_receivers, indptr, indices)

    @classmethod
    def empty(cls, n: int) -> "BipartiteGraph":
        return cls(n, n, np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), check=False)

    @classmethod
    def complete(cls, n: int) -> "BipartiteGraph":
        return cls(n, n, np.arange(n + 1) * n, np.tile(np.arange(n), n), check=False)

    @property
    def n_edges(self) -> int:
        return int(self.indices.size)

    @property
    def adj(self) -> list[tuple[int, ...]]:
        return [tuple(self.neighbors(u).tolist()) for u in range(self.n_senders)]

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def out_degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def receiver_degrees(self) -> np.ndarray:
        if self._rdeg is None:
            rdeg = np.bincount(self.indices, minlength=self.n_receivers).astype(np.int64)
            rdeg.flags.writeable = False
            self._rdeg = rdeg
        return self._rdeg

    def edge_senders(self) -> np.ndarray:
        """Sender index of every entry of ``indices``."""
        return np.repeat(np.arange(self.n_senders), self.out_degrees())

    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.edge_senders().tolist(), self.indices.tolist()))

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < nb.size and nb[i] == v)

    def __eq__(self, other):
        if not isinstance(other, BipartiteGraph):
            return NotImplemented
        return (
            self.n_senders == other.n_senders
            and self.n_receivers == other.n_receivers
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    __hash__ = None

    def __repr__(self):
        return f"BipartiteGraph(n_senders={self.n_senders}, n_receivers={self.n_receivers}, n_edges={self.n_edges})"

    # -- text serialisation --------------------------------------------------

    def to_text(self) -> str:
        lines = [f"N {self.n_senders}"]
        if self.n_receivers != self.n_senders:
            lines[0] += f" {self.n_receivers}"
        for u in range(self.n_senders):
            nb = " ".join(str(v) for v in self.neighbors(u).tolist())
            lines.append(f"{u}: {nb}".rstrip())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BipartiteGraph":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not lines or not lines[0].startswith("N "):
            raise ConfigError("graph file must start with a header line 'N <n>'")
        head = lines[0].split()
        try:
            n = int(head[1])
            n_recv = int(head[2]) if len(head) > 2 else n
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"malformed graph header {lines[0]!r}") from exc
        adj: list[list[int]] = [[] for _ in range(n)]
        for ln in lines[1:]:
            u_str, sep, rest = ln.partition(":")
            if not sep:
                raise ConfigError(f"malformed graph line {ln!r}")
            try:
                u = int(u_str)
                if not 0 <= u < n:
                    raise IndexError
                adj[u] = [int(v) for v in rest.split()]
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"malformed graph line {ln!r}") from exc
        try:
            return cls.from_adjacency(adj, n_recv)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def receiver_degrees(g: BipartiteGraph) -> np.ndarray:
    return g.receiver_degrees()


def sample_subsets(gen: np.random.Generator, n: int, sizes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Uniform random subsets of ``range(n)``, one of size ``sizes[i]`` per row.

    Vectorised partial Fisher-Yates: step ``j`` swaps column ``j`` of every
    row with a uniformly chosen column in ``[j, n)``. Returns CSR
    ``(indptr, indices)`` with each row sorted.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    rows = sizes.size
    kmax = int(sizes.max(initial=0))
    indptr = np.zeros(rows + 1, dtype=np.int64)
    np.cumsum(sizes, out=indptr[1:])
    if kmax == 0:
        return indptr, np.zeros(0, dtype=np.int64)
    perm = np.tile(np.arange(n, dtype=np.int64), (rows, 1))
    ridx = np.arange(rows)
    for j in range(kmax):
        pick = gen.integers(j, n, size=rows)
        tmp = perm[ridx, pick]
        perm[ridx, pick] = perm[:, j]
        perm[:, j] = tmp
    chosen = perm[:, :kmax]
    keep = np.arange(kmax)[None, :] < sizes[:, None]
    chosen = np.where(keep, chosen, n)
    chosen.sort(axis=1)
    return indptr, chosen[keep]


def generate_dout(n: int, deg: DegreeSpec, rng: "RngSeed | int | None" = None) -> BipartiteGraph:
    """Draw a D-out random bipartite graph on ``n`` senders and ``n`` receivers.

    Sender degrees are iid copies of ``min(D, n)``; given its degree each
    sender picks a uniform random receiver subset of that size.
    """
    if n < 1:
        raise ConfigError(f"n must be at least 1, got {n}")
    if not isinstance(deg, DegreeSpec):
        raise ConfigError("deg must be a DegreeSpec")
    gen = as_seed(rng).generator(GRAPH)
    sizes = deg.sample(gen, n, cap=n)
    indptr, indices = sample_subsets(gen, n, sizes)
    return BipartiteGraph(n, n, indptr, indices, check=False)
