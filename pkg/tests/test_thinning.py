import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dbmatch.graph import BipartiteGraph, ConfigError, DegreeSpec, generate_dout, receiver_degrees
from dbmatch.matching import SelectionRule, run_round
from dbmatch.rng import RngSeed
from dbmatch.thinning import ThinningPolicy, thin


def test_parse_and_label():
    assert ThinningPolicy.parse("none") == ThinningPolicy.none()
    assert ThinningPolicy.parse("bern:0.25") == ThinningPolicy.bernoulli(0.25)
    assert ThinningPolicy.parse("max:3") == ThinningPolicy.max_k(3)
    for p in (ThinningPolicy.none(), ThinningPolicy.bernoulli(0.3), ThinningPolicy.max_k(2)):
        assert ThinningPolicy.parse(p.label()) == p


@pytest.mark.parametrize("text", ["bern:1.2", "bern:-0.1", "max:0", "max:x", "keep:2", "none:1"])
def test_parse_rejects(text):
    with pytest.raises(ConfigError):
        ThinningPolicy.parse(text)


def test_none_and_bern_one_are_identity():
    g = generate_dout(30, DegreeSpec.deterministic(5), 1)
    assert thin(g, ThinningPolicy.none(), 2) == g
    assert thin(g, ThinningPolicy.bernoulli(1.0), 2) == g


def test_bern_zero_removes_everything():
    g = generate_dout(30, DegreeSpec.deterministic(5), 1)
    assert thin(g, ThinningPolicy.bernoulli(0.0), 2).n_edges == 0


def test_max2_on_degrees_5_2_0():
    g = BipartiteGraph.from_adjacency([[0, 1, 2, 3, 4], [1, 3], []], 5)
    h = thin(g, ThinningPolicy.max_k(2), 9)
    assert h.out_degrees().tolist() == [2, 2, 0]
    assert h.adj[1] == (1, 3)


def _is_subset(h: BipartiteGraph, g: BipartiteGraph) -> bool:
    return all(set(a) <= set(b) for a, b in zip(h.adj, g.adj))


@settings(max_examples=60)
@given(
    n=st.integers(1, 25),
    deg=st.sampled_from(["det:3", "bin:25,0.3", "pois:4"]),
    policy=st.sampled_from(["bern:0.5", "bern:0.1", "max:1", "max:2", "max:4"]),
    seed=st.integers(0, 2**40),
)
def test_subset_and_cap_properties(n, deg, policy, seed):
    g = generate_dout(n, DegreeSpec.parse(deg), RngSeed(seed, 0))
    pol = ThinningPolicy.parse(policy)
    h = thin(g, pol, RngSeed(seed, 1))
    h.validate()
    assert _is_subset(h, g)
    if pol.kind == "max":
        assert np.array_equal(h.out_degrees(), np.minimum(g.out_degrees(), pol.k))


def test_thinning_is_reproducible_and_independent_of_graph_stream():
    g = generate_dout(50, DegreeSpec.deterministic(6), RngSeed(3, 0))
    a = thin(g, ThinningPolicy.max_k(2), RngSeed(3, 0))
    b = thin(g, ThinningPolicy.max_k(2), RngSeed(3, 0))
    c = thin(g, ThinningPolicy.max_k(2), RngSeed(3, 1))
    assert a == b and a != c


def test_maxk_subsets_are_uniform():
    g = BipartiteGraph.from_adjacency([[0, 1, 2, 3, 4]], 5)
    counts = {}
    for r in range(20_000):
        key = thin(g, ThinningPolicy.max_k(2), RngSeed(r)).adj[0]
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 10
    assert stats.chisquare(list(counts.values())).pvalue > 0.001


def test_bern_thinning_of_erdos_renyi_is_erdos_renyi():
    # A Bin(N, p) out-degree with uniform neighbours is exactly G(N, N, p).
    n, p, q, R = 144, 0.05, 0.4, 400
    counts = np.zeros(n + 1)
    for r in range(R):
        g = generate_dout(n, DegreeSpec.binomial(n, p), RngSeed(21, r))
        h = thin(g, ThinningPolicy.bernoulli(q), RngSeed(22, r))
        counts += np.bincount(receiver_degrees(h), minlength=n + 1)
    expected = stats.binom.pmf(np.arange(n + 1), n, p * q)
    cut = 15
    obs = np.append(counts[:cut], counts[cut:].sum())
    exp = np.append(expected[:cut], expected[cut:].sum()) * counts.sum()
    assert stats.chisquare(obs, exp * obs.sum() / exp.sum()).pvalue > 0.001


@pytest.mark.parametrize("d", [3, 4, 8])
def test_max2_thinning_matches_direct_two_out(d):
    n, R = 144, 1000
    greedy = SelectionRule.greedy()
    thinned = [
        run_round(thin(generate_dout(n, DegreeSpec.deterministic(d), RngSeed(31, r)), ThinningPolicy.max_k(2), RngSeed(32, r)), greedy, RngSeed(33, r)).matched_fraction
        for r in range(R)
    ]
    direct = [run_round(generate_dout(n, DegreeSpec.deterministic(2), RngSeed(34, r)), greedy, RngSeed(35, r)).matched_fraction for r in range(R)]
    assert stats.ttest_ind(thinned, direct).pvalue > 0.01
