import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgscope.graph import largest_component
from sgscope.ingest import build_base_graph, network_view
from sgscope.interestingness import sample_background
from sgscope.synth import PlantedGroup, SynthParams, generate_synthetic_corpus
from sgscope.validate import (
    CorePeripheryProfile, ValidationError, compare_to_baseline, core_periphery_profile,
    profile_component, stands_out_low,
)

from conftest import gnp_edges, homog
from oracles import naive_core_numbers, preferential_attachment_edges


def complete(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def direct_densities(n, edges, core):
    """Density by counting pairs of each class directly."""
    edges = {(min(i, j), max(i, j)) for i, j in edges}
    per = [v for v in range(n) if v not in core]

    def dens(a, b, same):
        pairs = [(x, y) for x in a for y in b if (x < y if same else True)]
        if not pairs:
            return 0.0
        return sum((min(x, y), max(x, y)) in edges for x, y in pairs) / len(pairs)

    return dens(sorted(core), sorted(core), True), dens(per, per, True), dens(sorted(core), per, False)


def hashtag_view(records):
    return network_view(build_base_graph(records), "hashtag")


def test_clique_profile():
    prof = core_periphery_profile(homog(5, complete(5)))
    assert len(prof.core) == 5 and prof.periphery == []
    assert prof.core_density == 1.0 and prof.degenerate and prof.max_core == 4
    assert prof.ratio == math.inf


def test_star_is_single_shell():
    prof = core_periphery_profile(homog(6, [(0, k) for k in range(1, 6)]))
    assert len(prof.core) == 6 and prof.degenerate and prof.max_core == 1


def test_too_small():
    with pytest.raises(ValidationError):
        core_periphery_profile(homog(2, [(0, 1)]))


def test_json_keeps_non_finite_ratio():
    doc = core_periphery_profile(homog(4, complete(4))).to_json()
    assert doc["ratio"] == "inf" and doc["degenerate_single_shell"]


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 22), st.floats(0.1, 0.7), st.randoms(use_true_random=False))
def test_densities_by_direct_count(n, prob, r):
    edges = gnp_edges(n, prob, r)
    prof = core_periphery_profile(homog(n, edges))
    mu = naive_core_numbers(n, edges)
    core = {v for v in range(n) if mu[v] == max(mu)}
    assert set(prof.core) == {f"h{v}" for v in core}
    assert set(prof.core) | set(prof.periphery) == {f"h{v}" for v in range(n)}
    assert not set(prof.core) & set(prof.periphery)
    c, p, x = direct_densities(n, edges, core)
    assert prof.core_density == pytest.approx(c, abs=1e-12)
    assert prof.periphery_density == pytest.approx(p, abs=1e-12)
    assert prof.cross_density == pytest.approx(x, abs=1e-12)
    for d in (prof.core_density, prof.periphery_density, prof.cross_density):
        assert 0.0 <= d <= 1.0


def test_baseline_self_consistency():
    r = random.Random(11)
    bg = homog(400, preferential_attachment_edges(r, 400, 3))
    ratios, infinite = [], 0
    for i, s in enumerate(sample_background(bg, 60, 10, seed=100)):
        prof = compare_to_baseline(s, bg, n_samples=20, seed=i)
        b = prof.baseline
        if math.isinf(prof.ratio):
            # an edgeless periphery; the baseline drops these samples too
            infinite += 1
            continue
        ratios.append(abs(prof.ratio - b["ratio_mean"]) <= 3 * b["ratio_std"])
    assert all(ratios) and infinite <= 2


def test_baseline_deterministic_single_sample():
    r = random.Random(5)
    bg = homog(100, gnp_edges(100, 0.06, r))
    [s] = sample_background(bg, 30, 1, seed=1)
    a = compare_to_baseline(s, bg, n_samples=1, seed=3).to_json()
    b = compare_to_baseline(s, bg, n_samples=1, seed=3).to_json()
    assert a == b and a["baseline"]["ratio_std"] == 0.0


def test_baseline_background_too_small():
    with pytest.raises(ValidationError, match="background too small"):
        compare_to_baseline(homog(5, complete(5)), homog(3, complete(3)))


def test_stands_out_low_needs_baseline():
    prof = core_periphery_profile(homog(5, complete(5)))
    with pytest.raises(ValidationError):
        stands_out_low(prof)
    prof.baseline = {"ratio_mean": 5.0, "ratio_std": 1.0}
    assert not stands_out_low(prof)  # infinite ratio never counts as low
    low = CorePeripheryProfile([], [], 0.2, 0.4, 0.0, 2, baseline={"ratio_mean": 5.0, "ratio_std": 1.0})
    assert stands_out_low(low)


def test_planted_dense_core_recovered():
    corpus = generate_synthetic_corpus(SynthParams(
        n_background_posts=300, seed=2,
        planted_groups=[PlantedGroup(60, ["budget"], "dense-core")]))
    [grp] = corpus.labels["groups"]
    posts = {p for p in grp["post_ids"]}
    view = hashtag_view([r for r in corpus.records if r.post_id in posts])
    prof = core_periphery_profile(view)
    planted = {"h:" + t for t in grp["core_hashtags"]}
    assert len(planted & set(prof.core)) >= 0.9 * len(planted)


def test_planted_sparse_core_below_baseline():
    corpus = generate_synthetic_corpus(SynthParams(
        n_background_posts=2000, seed=3,
        planted_groups=[PlantedGroup(150, ["stimulus"], "sparse-core-dense-periphery")]))
    [grp] = corpus.labels["groups"]
    posts = set(grp["post_ids"])
    cand = hashtag_view([r for r in corpus.records if r.post_id in posts])
    background = hashtag_view(corpus.records)
    prof = profile_component(cand, background, n_samples=10, seed=0)
    assert prof.ratio < prof.baseline["ratio_mean"]
    # circulant plus the signature tag gives coreness 5; each clique with it is a K5
    assert prof.max_core == 5
    assert set(prof.periphery) >= {"h:" + t for t in grp["periphery_hashtags"]}


def test_profile_component_uses_largest():
    g = homog(9, complete(5) + [(5, 6), (7, 8)])
    prof = core_periphery_profile(largest_component(g))
    assert len(prof.core) == 5
    assert np.isclose(prof.core_density, 1.0)
