"""Degree-biased one-round matching on random bipartite graphs.

Graph generation and thinning live in :mod:`dbmatch.graph` and
:mod:`dbmatch.thinning`, the protocol engine and baselines in
:mod:`dbmatch.matching`, closed-form predictions in :mod:`dbmatch.theory`,
Monte Carlo harnesses in :mod:`dbmatch.experiments` and the slotted
network simulator in :mod:`dbmatch.dynsim`.
"""

from .graph import BipartiteGraph, ConfigError, DegreeSpec, generate_dout
from .matching import MatchResult, SelectionRule, run_round
from .rng import RngSeed
from .thinning import ThinningPolicy, thin

__version__ = "0.1.0"

__all__ = [
    "BipartiteGraph",
    "ConfigError",
    "DegreeSpec",
    "MatchResult",
    "RngSeed",
    "SelectionRule",
    "ThinningPolicy",
    "generate_dout",
    "run_round",
    "thin",
]
