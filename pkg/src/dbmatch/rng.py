"""Seeded random streams.

Every random draw in the package goes through :class:`RngSeed`, so a
``(seed, stream_id)`` pair pins down a graph, a thinning or a matching run
bit for bit. Sub-streams are derived with :class:`numpy.random.SeedSequence`
spawn keys, which keeps streams for different purposes statistically
independent without any bookkeeping of offsets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1

# Purpose tags used as the first spawn-key element.
GRAPH = 1
THIN = 2
GRANT = 3
ACCEPT = 4
ARRIVALS = 5


@dataclass(frozen=True)
class RngSeed:
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= value <= _MASK64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {value!r}")

    def generator(self, *keys: int) -> np.random.Generator:
        """Return a fresh generator for the sub-stream addressed by ``keys``."""
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), *map(int, keys)))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream_id: int) -> "RngSeed":
        return RngSeed(self.seed, stream_id)


def as_seed(rng: "RngSeed | int | None") -> RngSeed:
    if rng is None:
        return RngSeed()
    if isinstance(rng, RngSeed):
        return rng
    return RngSeed(int(rng))
