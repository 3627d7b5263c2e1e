"""Acceptance criteria, one check per criterion.

Each check records a PASS/FAIL line, printed at the end of the pytest run
(and directly when this file is run as a script).  Tolerances and thresholds
are the ones the criteria state.  Criterion 5's propagative half is expected
to fail and is marked xfail(strict=True); see the decision ledger.
"""

import math
import random
import sys
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from sgscope.graph import NodeKind
from sgscope.grouping import AttributeGrouping, GroupingFunction, PatternGrouping, group_nodes
from sgscope.ingest import build_base_graph
from sgscope.interestingness import DivergenceSet, cut2bin, discover, jensen_shannon
from sgscope.metrics import (
    METRICS, core_numbers, current_flow_betweenness, edge_betweenness, eigenvector_centrality,
    from_edge_list, subgraph_centrality,
)
from sgscope.pipeline import read_json, run_pipeline, sha256
from sgscope.synth import generate_synthetic_corpus

sys.path.insert(0, str(Path(__file__).parent))
from conftest import rec  # noqa: E402
from oracles import (  # noqa: E402
    current_flow_oracle, discover_oracle, edge_betweenness_oracle, naive_core_numbers,
    power_iteration, random_edges, series_subgraph_centrality,
)
from planted import planted_config, planted_params, run_trial  # noqa: E402

RESULTS: list[str] = []
N_SEEDS = 20


def report(cid, ok, detail):
    line = f"{cid} {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def vec(d, n):
    return np.array([d[str(i)] for i in range(n)], dtype=float)


# 1. metric-oracle equivalence

def test_c1_metric_oracles():
    r = random.Random(2024)
    worst = dict.fromkeys(["eb", "ev", "cf", "sc", "sc_abs"], 0.0)
    core_ok = True
    t0 = time.perf_counter()
    impl_time = 0.0
    for k in range(50):
        n = r.randint(5, 40)
        p = (0.1, 0.2, 0.3)[k % 3]
        edges = random_edges(r, n, p)
        g = from_edge_list(n, edges)
        t1 = time.perf_counter()
        eb = edge_betweenness(g)
        ev = vec(eigenvector_centrality(g), n)
        cf = vec(current_flow_betweenness(g), n)
        mu = core_numbers(g)
        sc = vec(subgraph_centrality(g), n)
        impl_time += time.perf_counter() - t1

        for (i, j), v in edge_betweenness_oracle(n, edges).items():
            worst["eb"] = max(worst["eb"], abs(eb[(str(i), str(j))] - float(v)))
        pi = power_iteration(n, edges)
        cos = float(ev @ pi / (np.linalg.norm(ev) * np.linalg.norm(pi)))
        worst["ev"] = max(worst["ev"], 1 - cos)
        worst["cf"] = max(worst["cf"], float(np.max(np.abs(cf - current_flow_oracle(n, edges)))))
        core_ok &= [mu[str(i)] for i in range(n)] == naive_core_numbers(n, edges)
        series = series_subgraph_centrality(n, edges, terms=40)
        # the truncated series is itself off by ~1e-10 of the value on dense graphs
        worst["sc"] = max(worst["sc"], float(np.max(np.abs(sc - series) / np.maximum(1.0, np.abs(series)))))
        worst["sc_abs"] = max(worst["sc_abs"], float(np.max(np.abs(sc - series))))
    total = time.perf_counter() - t0
    ok = (worst["eb"] <= 1e-9 and worst["ev"] <= 1e-12 and worst["cf"] <= 1e-8 and core_ok
          and worst["sc"] <= 1e-8 and total < 60)
    report("C1", ok, f"eb {worst['eb']:.1e}, 1-cos(ev) {worst['ev']:.1e}, cf {worst['cf']:.1e}, "
                     f"core exact {core_ok}, sc rel {worst['sc']:.1e} (abs {worst['sc_abs']:.1e}), "
                     f"{total:.1f}s total ({impl_time:.1f}s in the package)")
    assert ok


# 2 and 3. divergence properties and cut2bin compatibility

def histogram_pairs():
    r = random.Random(808)
    for _ in range(200):
        ref = [r.gauss(r.uniform(-5, 5), r.uniform(0.1, 3)) for _ in range(r.randint(1, 100))]
        other = [r.expovariate(r.uniform(0.2, 2)) for _ in range(r.randint(1, 100))]
        yield ref, other, r.randint(1, 30)


def test_c2_divergence_properties():
    worst_sym, in_range, self_zero = 0.0, True, True
    for ref, other, n in histogram_pairs():
        h1, h2 = cut2bin(ref, other, n)
        p, q = h1.normalized, h2.normalized
        d = jensen_shannon(p, q)
        in_range &= 0.0 <= d <= 1.0
        self_zero &= jensen_shannon(p, p) == 0.0 and jensen_shannon(q, q) == 0.0
        worst_sym = max(worst_sym, abs(d - jensen_shannon(q, p)))
    hand = jensen_shannon([0.5, 0.5], [0.0, 1.0])
    ok = in_range and self_zero and worst_sym <= 1e-12 and abs(hand - 0.31128) <= 1e-5
    report("C2", ok, f"range {in_range}, JSD(P,P)=0 {self_zero}, symmetry {worst_sym:.1e}, "
                     f"JSD((.5,.5),(0,1)) = {hand:.5f}")
    assert ok


def test_c3_cut2bin_compatibility():
    pairs = list(histogram_pairs())
    bad = 0
    for ref, other, n in pairs:
        h1, h2 = cut2bin(ref, other, n)
        if not (h1.bin_edges == h2.bin_edges and sum(h1.counts) == len(ref)
                and sum(h2.counts) == len(other) and len(h1.counts) == n):
            bad += 1
    report("C3", bad == 0, f"{len(pairs) - bad}/{len(pairs)} pairs share edges and keep every value")
    assert bad == 0


# 4. ranking-loop semantics

HANDCRAFTED = [
    # one candidate dominating another on every metric
    [[0.1] * 6, [0.5] * 6],
    # exact ties in ev stop everything
    [[0.3, 0.1, 0.1, 0.1, 0.1, 0.1], [0.3, 0.9, 0.9, 0.9, 0.9, 0.9], [0.2, 0.0, 0.0, 0.0, 0.0, 0.0]],
    # higher ev and ec but a smaller nc*z product
    [[0.1, 0.1, 0.5, 0.5, 0.0, 0.0], [0.2, 0.2, 0.1, 0.1, 0.0, 0.0], [0.3, 0.05, 0.9, 0.9, 0.0, 0.0]],
    # a strict chain over five candidates
    [[0.1 * i] * 6 for i in range(1, 6)],
    # mixed ordering
    [[0.9, 0.1, 0.3, 0.7, 0.2, 0.2], [0.5, 0.5, 0.5, 0.5, 0.5, 0.5], [0.7, 0.8, 0.1, 0.9, 0.0, 0.4],
     [0.2, 0.9, 0.9, 0.2, 0.3, 0.1]],
]


def sets_from(rows):
    return [DivergenceSet(f"c{i}", "R", dict(zip(["ev", "ec", "nc", "z", "mu", "sc"], v)))
            for i, v in enumerate(rows)]


def test_c4_ranking_semantics():
    hand_ok = 0
    for rows in HANDCRAFTED:
        sets = sets_from(rows)
        res = discover(sets)
        hand_ok += (res.v1, res.v2, res.v3) == discover_oracle(sets)
    r = random.Random(99)
    nest_ok = 0
    for _ in range(1000):
        grid = r.random() < 0.5
        rows = [[r.choice([0.0, 0.1, 0.2, 0.5]) if grid else r.random() for _ in METRICS]
                for _ in range(r.randint(2, 12))]
        res = discover(sets_from(rows))
        nest_ok += all(0 <= res.v3[c] <= res.v2[c] <= res.v1[c] for c in res.v1)
    ok = hand_ok == len(HANDCRAFTED) and nest_ok == 1000
    report("C4", ok, f"handcrafted {hand_ok}/{len(HANDCRAFTED)} match the oracle, "
                     f"nesting holds on {nest_ok}/1000 random collections")
    assert ok


# 5. planted groups end to end

@pytest.fixture(scope="module")
def trials(tmp_path_factory):
    root = tmp_path_factory.mktemp("planted")
    out = [run_trial(s, root / str(s)) for s in range(N_SEEDS)]
    prop = sum(t["propagative_top3"] for t in out)
    sparse = sum(t["sparse_flagged"] for t in out)
    slowest = max(t["seconds"] for t in out)
    need = math.ceil(0.9 * N_SEEDS)
    ok = prop >= need and sparse >= need and slowest < 300
    report("C5", ok, f"propagative in v3 top-3 {prop}/{N_SEEDS}, sparse-core below baseline "
                     f"{sparse}/{N_SEEDS} (need {need} each), slowest seed {slowest:.1f}s")
    return {"runs": out, "root": root, "need": need}


@pytest.mark.xfail(strict=True, reason="size confounding: small background candidates out-diverge "
                                       "the planted group, which dominates its own reference")
def test_c5_propagative_top3(trials):
    assert sum(t["propagative_top3"] for t in trials["runs"]) >= trials["need"]


def test_c5_sparse_core_flagged(trials):
    assert sum(t["sparse_flagged"] for t in trials["runs"]) >= trials["need"]


def test_c5_runtime(trials):
    assert max(t["seconds"] for t in trials["runs"]) < 300


# 6. grouping correctness

DATE = GroupingFunction(NodeKind.POST, "created_at", "date")
TAG = GroupingFunction(NodeKind.HASHTAG, "text")


def test_c6_grouping():
    r = random.Random(6)
    partitions = 0
    for trial in range(20):
        recs = [rec(f"p{i}", minutes=r.randrange(7 * 24 * 60), favorite_count=r.randrange(300),
                    hashtags=r.sample("abcdef", r.randint(0, 3))) for i in range(r.randint(1, 300))]
        g = build_base_graph(recs)
        spec = AttributeGrouping((DATE, GroupingFunction(NodeKind.POST, "favorite_count", "bin", 50)))
        members = [m for grp in group_nodes(g, spec) for m in grp.members]
        partitions += len(members) == len(set(members)) and set(members) == set(g.nodes_of(NodeKind.POST))
    g = build_base_graph([rec("p1", hashtags=["a", "b"])])
    groups = {grp.key: grp.members for grp in group_nodes(g, PatternGrouping(DATE, "uses", TAG))}
    overlap = groups == {("2021-01-06", "a"): {"p:p1", "h:a"}, ("2021-01-06", "b"): {"p:p1", "h:b"}}
    ok = partitions == 20 and overlap
    report("C6", ok, f"attribute groups partition posts in {partitions}/20 corpora, "
                     f"two-hashtag post lands in both groups {overlap}")
    assert ok


# 7. determinism

def manifest_hashes(m):
    return [(s["stage"], s["inputs"], s["outputs"]) for s in m["stages"]]


def test_c7_determinism(trials, tmp_path):
    first = trials["root"] / "0"
    corpus = tmp_path / "corpus.jsonl"
    generate_synthetic_corpus(planted_params(0)).write(corpus)
    same_corpus = sha256(corpus) == sha256(first / "corpus.jsonl")
    again = run_pipeline(planted_config(corpus, tmp_path / "run", 0))
    before = read_json(first / "run" / "manifest.json")
    same = manifest_hashes(again) == manifest_hashes(before)
    n_files = sum(len(s["outputs"]) for s in again["stages"])
    ok = same_corpus and same
    report("C7", ok, f"corpus identical {same_corpus}, {n_files} stage outputs hash-identical {same}")
    assert ok


# 8. dataset parity (network)

def test_c8_dataset_parity():
    RESULTS.append("C8 SKIP  needs the published snapshot over the network; not run here")
    pytest.skip("dataset parity needs network access")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-p", "no:cacheprovider"]))
