"""Closed-form predictions for DB(0) and DB(-inf) on D-out random graphs.

All tail probabilities are accumulated from log-space pmf terms with
:func:`math.fsum`, and upper tails are summed directly instead of being
formed as ``1 - cdf``; powers of tails near zero would otherwise amplify
rounding error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .graph import ConfigError, DegreeSpec, binomial_pmf, poisson_pmf


@dataclass(frozen=True)
class BinomialLaw:
    """Binomial(n, p): pmf ``q_k``, cdf ``Q_k`` and complementary cdf ``Qbar_k``.

    Indices outside ``0..n`` follow the usual conventions: the pmf is zero,
    ``Q_k = 0`` for ``k < 0`` and ``1`` for ``k >= n``.
    """

    n: int
    p: float

    @cached_property
    def _pmf(self) -> np.ndarray:
        return binomial_pmf(np.arange(self.n + 1), self.n, self.p)

    @cached_property
    def _ccdf(self) -> list[float]:
        # _ccdf[k] = P{X > k} for k = -1..n, stored at offset k + 1
        pmf = self._pmf
        tail = [0.0] * (self.n + 2)
        for k in range(self.n - 1, -2, -1):
            tail[k + 1] = math.fsum(pmf[k + 1 :])
        return tail

    def pmf(self, k: int) -> float:
        return float(self._pmf[k]) if 0 <= k <= self.n else 0.0

    def ccdf(self, k: int) -> float:
        if k < 0:
            return 1.0
        if k >= self.n:
            return 0.0
        return self._ccdf[k + 1]

    def cdf(self, k: int) -> float:
        if k < 0:
            return 0.0
        if k >= self.n:
            return 1.0
        return math.fsum(self._pmf[: k + 1])


@dataclass(frozen=True)
class PoissonLaw:
    """Poisson(mean): pmf ``pi_s``, cdf ``Pi_s`` and complementary cdf ``Pibar_s``.

    The pmf is tabulated up to ``kmax``, chosen so that the omitted mass
    (``tail_error``) is below the smallest positive double.
    """

    mean: float

    @cached_property
    def kmax(self) -> int:
        k = max(int(10 * self.mean + 50), 1)
        while poisson_pmf(np.array([k]), self.mean)[0] > 1e-300:
            k *= 2
        return k

    @cached_property
    def _pmf(self) -> np.ndarray:
        return poisson_pmf(np.arange(self.kmax + 1), self.mean)

    @cached_property
    def _ccdf(self) -> np.ndarray:
        # summed from the far tail inwards, smallest terms first
        rev = np.cumsum(self._pmf[::-1])[::-1]
        return np.concatenate((rev[1:], [0.0]))

    @property
    def tail_error(self) -> float:
        """Upper bound on the pmf mass beyond ``kmax``."""
        lam, k = self.mean, self.kmax
        return float(poisson_pmf(np.array([k + 1]), lam)[0] / max(1.0 - lam / (k + 2), 1e-300))

    def pmf(self, s: int) -> float:
        if s < 0 or s > self.kmax:
            return 0.0
        return float(self._pmf[s])

    def ccdf(self, s: int) -> float:
        if s < 0:
            return 1.0
        if s > self.kmax:
            return 0.0
        return float(self._ccdf[s])

    def cdf(self, s: int) -> float:
        if s < 0:
            return 0.0
        return 1.0 - self.ccdf(s) if self.ccdf(s) > 0.5 else math.fsum(self._pmf[: s + 1])


# ---------------------------------------------------------------------------
# Uniform selection
# ---------------------------------------------------------------------------


def mean_match_uniform(n: int, prob_zero: float) -> float:
    """Exact mean matched fraction of DB(0): ``1 - (1 - (1 - P{D=0})/n)**n``."""
    if n < 1:
        raise ConfigError("n must be at least 1")
    if not 0.0 <= prob_zero <= 1.0:
        raise ConfigError(f"prob_zero must lie in [0, 1], got {prob_zero}")
    x = (1.0 - prob_zero) / n
    return -math.expm1(n * math.log1p(-x)) if x < 1.0 else 1.0


def mean_match_uniform_limit(deg: DegreeSpec) -> float:
    """Large-``N`` limit of :func:`mean_match_uniform`.

    Deterministic degrees give ``1 - 1/e``; binomial degrees with mean ``m``
    give ``1 - exp(-1 + exp(-m))``.
    """
    if deg.kind == "det":
        if deg.d < 1:
            return 0.0
        return 1.0 - math.exp(-1.0)
    if deg.kind == "bin":
        return -math.expm1(-1.0 + math.exp(-deg.mean()))
    raise ConfigError(f"no closed-form limit for degree kind {deg.kind!r}")


def binom_reciprocal(n: int, p: float, theta: float) -> float:
    """``E[theta**(X+1) / (X+1)]`` for ``X ~ Binomial(n, p)``, in closed form."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    a = 1.0 - p + p * theta
    b = 1.0 - p
    return (a ** (n + 1) - b ** (n + 1)) / ((n + 1) * p)


# ---------------------------------------------------------------------------
# Greedy selection
# ---------------------------------------------------------------------------


def greedy_grant_prob_finite(n: int, meandeg: float, d_u: int, s: int) -> float:
    """Grant probability from a degree-``d_u`` sender to a degree-``s`` neighbour.

    Residual neighbour degrees are taken as independent
    Binomial(n - 1, meandeg / n) variables. Zero when ``s - 1`` is outside
    their support.
    """
    if d_u < 1:
        raise ValueError("d_u must be at least 1")
    law = BinomialLaw(n - 1, meandeg / n)
    q = law.pmf(s - 1)
    if q == 0.0:
        return 0.0
    hi = law.ccdf(s - 2)
    lo = law.ccdf(s - 1)
    # hi**d - lo**d == (hi - lo) * sum_j hi**j lo**(d-1-j), and hi - lo == q
    return DegreeSpec.deterministic(d_u).pgf_slope(hi, lo) / d_u


def _limit_degree(deg: DegreeSpec) -> DegreeSpec:
    # Binomial(N, m/N) out-degrees converge to Poisson(m) together with N.
    return DegreeSpec.poisson(deg.mean()) if deg.kind == "bin" else deg


def greedy_f(s: int, deg: DegreeSpec, tail_tol: float = 1e-12, law: PoissonLaw | None = None) -> float:
    """Limiting probability that a sender grants a given degree-``s`` neighbour.

    ``f(0) = 0``; for ``s >= 1`` it is
    ``(G_D(Pibar_{s-2}) - G_D(Pibar_{s-1})) / (mean * pi_{s-1})`` with Poisson
    tails of the mean degree.
    """
    if s <= 0:
        return 0.0
    m = deg.mean()
    if m <= 0:
        raise ConfigError("greedy_f needs a positive mean degree")
    deg = _limit_degree(deg)
    if law is None:
        law = PoissonLaw(m)
    pi = law.pmf(s - 1)
    if pi == 0.0:
        # Far tail: both arguments of G_D are 0 in double precision.
        return deg.pgf_slope(0.0, 0.0) / m
    hi = law.ccdf(s - 2)
    lo = law.ccdf(s - 1)
    # G_D(hi) - G_D(lo) == slope * (hi - lo) and hi - lo == pi exactly.
    return min(max(deg.pgf_slope(hi, lo) / m, 0.0), 1.0)


def greedy_f_closed_form(s: int, deg: DegreeSpec) -> float:
    """Direct special-case forms of ``f(s)`` for deterministic and Poisson degrees."""
    if s <= 0:
        return 0.0
    m = deg.mean()
    law = PoissonLaw(m)
    pi = law.pmf(s - 1)
    if pi == 0.0:
        return greedy_f(s, deg)
    # Both differences are rewritten around the gap pi_{s-1} so that neither
    # subtracts two nearly equal numbers.
    if deg.kind == "det":
        hi = law.ccdf(s - 2)
        if pi >= hi:
            return hi**m / (m * pi)
        return -(hi**m) * math.expm1(m * math.log1p(-pi / hi)) / (m * pi)
    if deg.kind == "pois":
        return -math.exp(-m * law.cdf(s - 2)) * math.expm1(-m * pi) / (m * pi)
    raise ConfigError("closed forms exist only for deterministic and Poisson degrees")


@dataclass(frozen=True)
class SeriesResult:
    value: float
    terms: int
    tail_bound: float

    def __float__(self) -> float:
        return self.value


def mean_match_greedy_bound(deg: DegreeSpec, tail_tol: float = 1e-12) -> SeriesResult:
    """Asymptotic lower bound on the DB(-inf) mean matched fraction.

    Evaluates ``1 - sum_s pi_s (1 - f(s))**s`` with Poisson(mean) weights,
    stopping once the remaining Poisson mass is below ``tail_tol`` and at
    least ``10 * mean + 50`` terms have been summed. Dropped terms are each
    at most ``pi_s``, so the reported ``tail_bound`` bounds the error.
    """
    m = deg.mean()
    if m <= 0:
        raise ConfigError("mean degree must be positive")
    deg = _limit_degree(deg)
    law = PoissonLaw(m)
    min_terms = int(10 * m + 50)
    terms = []
    s = 0
    while True:
        f = greedy_f(s, deg, tail_tol, law)
        terms.append(law.pmf(s) * (1.0 - f) ** s)
        s += 1
        if s >= min_terms and law.ccdf(s - 1) < tail_tol:
            break
        if s > law.kmax:
            break
    return SeriesResult(1.0 - math.fsum(terms), s, law.ccdf(s - 1))
