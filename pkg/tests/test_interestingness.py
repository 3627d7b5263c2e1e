import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import jensenshannon
from scipy.stats import skew

from sgscope.construct import CandidateSubgraph
from sgscope.graph import NodeKind, PropertyGraph, connected_components
from sgscope.ingest import build_base_graph
from sgscope.interestingness import (
    DiscoveryError, DivergenceSet, Histogram, compare_histograms, cut2bin, discover,
    divergence_set, jensen_shannon, repartition_plan, sample_background,
)
from sgscope.metrics import METRICS, compute_metrics
from sgscope.query import InterestQuery, evaluate_interest_query

from conftest import gnp_edges, homog, rec
from oracles import discover_oracle


def linear_scan_bins(values, lo, hi, n):
    """Bin index by comparing against every edge; out-of-range values clamp."""
    edges = [lo + (hi - lo) * k / n for k in range(n + 1)]
    counts = [0] * n
    for v in values:
        idx = 0
        for k in range(1, n):
            if v >= edges[k]:
                idx = k
        counts[idx] += 1
    return counts


def kl2(p, q):
    return sum(a * math.log2(a / b) for a, b in zip(p, q) if a > 0)


def direct_jsd(p, q):
    m = [(a + b) / 2 for a, b in zip(p, q)]
    return 0.5 * kl2(p, m) + 0.5 * kl2(q, m)


def dset(cid, vals, ref="R"):
    return DivergenceSet(cid, ref, dict(zip(METRICS, vals)))


def test_cut2bin_examples():
    a, b = cut2bin([1, 2, 3, 4], [1, 2, 3, 4], 2)
    assert a.counts == b.counts == [2, 2]
    ref, other = cut2bin([1, 1, 2, 2], [3, 3, 4, 4], 2)
    assert ref.bin_edges == other.bin_edges == [1.0, 1.5, 2.0]
    assert other.counts == [0, 4] and ref.counts == [2, 2]
    _, low = cut2bin([1, 2], [-5, 0], 2)
    assert low.counts == [2, 0]


def test_cut2bin_errors():
    with pytest.raises(DiscoveryError, match="empty reference"):
        cut2bin([], [1.0], 3)
    with pytest.raises(DiscoveryError):
        cut2bin([1.0], [1.0], 0)


def test_cut2bin_symmetric_rule_uses_narrower_domain():
    wide, narrow = [0, 10], [2, 3]
    h1, h2 = cut2bin(wide, narrow, 4, designated=False)
    assert h1.bin_edges[0] == 2 and h1.bin_edges[-1] == 3
    assert h1.counts == [1, 0, 0, 1] and h2.counts == [1, 0, 0, 1]


def test_cut2bin_matches_linear_scan(rng):
    for _ in range(50):
        n = rng.randint(1, 25)
        ref = [rng.gauss(0, 1) for _ in range(rng.randint(2, 80))]
        other = [rng.gauss(0.5, 2) for _ in range(rng.randint(1, 80))]
        hr, ho = cut2bin(ref, other, n)
        lo, hi = min(ref), max(ref)
        assert hr.counts == linear_scan_bins(ref, lo, hi, n)
        assert ho.counts == linear_scan_bins(other, lo, hi, n)


def test_constant_reference_gets_unit_span():
    h, _ = cut2bin([3, 3, 3], [3], 2)
    assert h.bin_edges == [2.5, 3.0, 3.5] and h.counts == [0, 3]


def test_jsd_examples():
    assert compare_histograms([1, 2, 3], [1, 2, 3], 4) == 0.0
    assert jensen_shannon([0.5, 0.5], [0, 1]) == pytest.approx(0.31128, abs=1e-5)
    assert direct_jsd([0.5, 0.5], [0, 1]) == pytest.approx(0.31128, abs=1e-5)
    # reference [0, 1] over two bins vs candidate piled on the right
    assert compare_histograms([0, 1], [1, 1], 2) == pytest.approx(0.31128, abs=1e-5)
    assert jensen_shannon([1, 0], [0, 1]) == 1.0
    with pytest.raises(DiscoveryError):
        compare_histograms([], [1], 2)


def test_jsd_against_scipy(rng):
    for _ in range(200):
        n = rng.randint(1, 30)
        p = np.array([rng.random() if rng.random() > 0.2 else 0 for _ in range(n)]) + 0.0
        q = np.array([rng.random() if rng.random() > 0.2 else 0 for _ in range(n)]) + 0.0
        if p.sum() == 0 or q.sum() == 0:
            continue
        p, q = p / p.sum(), q / q.sum()
        assert abs(jensen_shannon(p, q) - jensenshannon(p, q, base=2) ** 2) < 1e-12
        assert abs(jensen_shannon(p, q) - direct_jsd(p, q)) < 1e-12


def test_histogram_fields():
    h, _ = cut2bin([0, 1, 1, 2, 9], [0], 3)
    assert len(h.counts) == len(h.bin_edges) - 1
    assert sum(h.normalized) == pytest.approx(1.0, abs=1e-12)
    assert Histogram([0, 1], [0]).normalized == [0.0] and Histogram([0, 1], [0]).empty
    assert h.to_json()["normalized"] == h.normalized


def test_histogram_skewness_matches_scipy():
    h = Histogram([0, 1, 2, 3, 4], [5, 3, 1, 1])
    sample = np.repeat(h.centers(), h.counts)
    assert h.skewness() == pytest.approx(skew(sample, bias=True), abs=1e-12)
    assert Histogram([0, 1, 2], [4, 0]).skewness() == 0.0


def test_divergence_set_examples():
    clique = compute_metrics(homog(5, [(i, j) for i in range(5) for j in range(i + 1, 5)]))
    path = compute_metrics(homog(5, [(i, i + 1) for i in range(4)]))
    ds, hists = divergence_set(path, path)
    assert all(v == 0 for v in ds.values.values())
    ds, hists = divergence_set(clique, path, n_bins=4)
    assert ds["ev"] > 0
    # hand count: path ev spans [0.289, 0.577]; every clique node sits at 0.447, bin 2 of 4
    ref_h, cand_h = hists["ev"]
    assert cand_h.counts == [0, 0, 5, 0]
    assert ref_h.counts == [2, 0, 2, 1]
    assert ds["ev"] == pytest.approx(direct_jsd(ref_h.normalized, [0, 0, 1, 0]), abs=1e-12)


def test_divergence_set_permutation_invariant(rng):
    edges = gnp_edges(14, 0.3, rng)
    ref = compute_metrics(homog(20, gnp_edges(20, 0.2, rng)))
    perm = list(range(14))
    rng.shuffle(perm)
    a, _ = divergence_set(compute_metrics(homog(14, edges)), ref)
    b, _ = divergence_set(compute_metrics(homog(14, [(perm[i], perm[j]) for i, j in edges])), ref)
    for m in METRICS:
        assert a[m] == pytest.approx(b[m], abs=1e-9)


def test_divergence_set_json():
    ds = DivergenceSet("c", "r", {m: 0.1 for m in METRICS}, {"mu": (1.0, 0.5), "sc": (2.0, 0.1)})
    assert DivergenceSet.from_json(ds.to_json()) == ds
    assert ds.right_skewed()


def test_discover_dominance_and_ties():
    r = discover([dset("a", [0.1] * 6), dset("b", [0.5] * 6)], k=5)
    assert (r.v1, r.v2, r.v3) == ({"a": 0, "b": 1},) * 3
    assert r.top_k["v3"] == ["b", "a"]
    same = discover([dset("a", [0.2] * 6), dset("b", [0.2] * 6)])
    assert all(v == 0 for vec in (same.v1, same.v2, same.v3) for v in vec.values())


def test_discover_errors():
    with pytest.raises(DiscoveryError):
        discover([dset("a", [0] * 6)])
    with pytest.raises(DiscoveryError, match="different references"):
        discover([dset("a", [0] * 6), dset("b", [0] * 6, ref="other")])
    with pytest.raises(DiscoveryError):
        discover([dset("a", [0] * 6), dset("b", [1] * 6)], mode="bogus")


def test_discover_k_larger_than_candidates():
    r = discover([dset("a", [0.1] * 6), dset("b", [0.3] * 6)], k=10)
    assert len(r.top_k["v1"]) == 2


def test_discover_five_candidates_vs_oracle():
    r = random.Random(7)
    sets = [dset(f"c{i}", [round(r.random(), 2) for _ in METRICS]) for i in range(5)]
    got = discover(sets, k=3)
    v1, v2, v3 = discover_oracle(sets)
    assert (got.v1, got.v2, got.v3) == (v1, v2, v3)
    assert got.top_k["v1"] == sorted(v1, key=lambda c: (-v1[c], c))[:3]


def test_discover_literal_mode_differs_from_prose():
    # nc/z product favours b, but the literal condition compares b.nc to a.ec
    a = dset("a", [0.1, 0.1, 0.1, 0.1, 0.0, 0.0])
    b = dset("b", [0.2, 0.2, 0.15, 0.9, 0.0, 0.0])
    a.values["ec"] = 0.19
    prose = discover([a, b])
    literal = discover([a, b], mode="literal")
    assert prose.v3["b"] == 1 and literal.v3["b"] == 0


def test_discover_repartition_flag():
    skewed = {"mu": (2.0, 0.1), "sc": (3.0, 0.2)}
    a = DivergenceSet("a", "R", dict(zip(METRICS, [0.1] * 6)))
    b = DivergenceSet("b", "R", dict(zip(METRICS, [0.5] * 6)), skewed)
    assert discover([a, b]).l == {"b"}
    b.skew["sc"] = (0.0, 0.2)
    assert discover([a, b]).l == set()


@settings(max_examples=80, deadline=None)
@given(st.lists(st.lists(st.sampled_from([0.0, 0.1, 0.2, 0.3, 0.5, 0.9]), min_size=6, max_size=6),
                min_size=2, max_size=8),
       st.randoms(use_true_random=False))
def test_discover_nesting_order_and_oracle(rows, r):
    sets = [dset(f"c{i}", v) for i, v in enumerate(rows)]
    res = discover(sets)
    assert (res.v1, res.v2, res.v3) == discover_oracle(sets)
    for c in res.v1:
        assert 0 <= res.v3[c] <= res.v2[c] <= res.v1[c]
    shuffled = list(sets)
    r.shuffle(shuffled)
    again = discover(shuffled)
    assert (again.v1, again.v2, again.v3) == (res.v1, res.v2, res.v3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=40),
       st.lists(st.floats(-100, 100), min_size=1, max_size=40), st.integers(1, 25))
def test_jsd_range_and_symmetry(ref, other, n):
    h1, h2 = cut2bin(ref, other, n)
    assert sum(h1.counts) == len(ref) and sum(h2.counts) == len(other)
    d = jensen_shannon(h1.normalized, h2.normalized)
    assert 0.0 <= d <= 1.0
    assert d == pytest.approx(jensen_shannon(h2.normalized, h1.normalized), abs=1e-15)
    assert (d < 1e-12) == np.allclose(h1.normalized, h2.normalized, atol=1e-12)


def test_sample_saturation_and_determinism(rng):
    g = homog(30, gnp_edges(30, 0.2, rng))
    [whole] = sample_background(g, 30, 1, seed=1)
    assert set(whole.nodes) == set(g.nodes)
    a = sample_background(g, 10, 4, seed=9)
    b = sample_background(g, 10, 4, seed=9)
    assert [sorted(x.nodes) for x in a] == [sorted(x.nodes) for x in b]
    assert all(len(x) == 10 for x in a)


def test_sample_needs_large_component():
    g = homog(6, [(0, 1), (2, 3), (4, 5)])
    with pytest.raises(DiscoveryError, match="no connected component"):
        sample_background(g, 3, 1)


def test_sample_is_connected_and_induced(rng):
    g = homog(60, gnp_edges(60, 0.08, rng))
    for s in sample_background(g, 15, 5, seed=3):
        assert len(connected_components(s)) == 1
        nodes = set(s.nodes)
        expected = {k for k, e in g.edges.items() if e.tail in nodes and e.head in nodes}
        assert set(s.edges) == expected


@pytest.mark.xfail(strict=True, reason="walk samples are edge-biased, so their density exceeds "
                                        "the component's for any target well below |g|")
def test_sample_density_matches_component():
    r = random.Random(2000)
    g = homog(2000, gnp_edges(2000, 0.01, r))
    n = len(g)
    comp_density = 2 * len(g.edges) / (n * (n - 1))
    dens = []
    for s in sample_background(g, 200, 30, seed=5):
        m = len(s)
        dens.append(2 * len(s.edges) / (m * (m - 1)))
    se = np.std(dens, ddof=1) / math.sqrt(len(dens))
    assert abs(np.mean(dens) - comp_density) <= 3 * se


def test_repartition_plan():
    recs = [rec("p1", text="covid vaccine mask"), rec("p2", text="mask only", minutes=1),
            rec("p3", text="covid outside", minutes=2)]
    g = build_base_graph(recs)
    sub = PropertyGraph()
    for pid in ("p:p1", "p:p2"):
        sub.add_node(NodeKind.POST, dict(g.nodes[pid].attrs), node_id=pid)
    cand = CandidateSubgraph("c", ("k",), "G1", sub)
    plan = repartition_plan(cand, ["covid", "vaccine", "mask"])
    assert len(plan) == 3 and [q.any_k_terms[0] for q in plan] == [["covid"], ["vaccine"], ["mask"]]
    assert evaluate_interest_query(g, plan[0]) == {"p:p1"}
    [single] = repartition_plan(cand, ["mask"])
    assert single.any_k_terms == (["mask"], 1) and set(single.scope) == {"p:p1", "p:p2"}
    assert evaluate_interest_query(g, single) == {"p:p1", "p:p2"}
    assert evaluate_interest_query(g, InterestQuery(any_k_terms=(["covid"], 1))) == {"p:p1", "p:p3"}
    with pytest.raises(DiscoveryError):
        repartition_plan(cand, [])
