"""Histogram comparison, background sampling and the candidate ranking loop."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations, permutations
from typing import Any, Iterable, Sequence

import numpy as np

from .construct import CandidateSubgraph
from .graph import (
    HC, EdgeKind, NodeKind, PropertyGraph, connected_components, induced_subgraph,
    largest_component,
)
from .ingest import network_view
from .grouping import detect_knee
from .metrics import METRICS, MetricBundle, compute_metrics, project
from .query import InterestQuery

DEFAULT_BINS = 20
RESTART_PROB = 0.15
DEFAULT_SAMPLES = 10
MIN_REFERENCE_TARGET = 500
TOPIC_MIN_SUPPORT = 50
SKEW_METRICS = ("mu", "sc")


class DiscoveryError(ValueError):
    pass


@dataclass
class Histogram:
    bin_edges: list[float]
    counts: list[int]

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    @property
    def empty(self) -> bool:
        return self.total == 0

    @property
    def normalized(self) -> list[float]:
        t = self.total
        if t == 0:
            return [0.0] * len(self.counts)
        return [c / t for c in self.counts]

    def centers(self) -> np.ndarray:
        e = np.asarray(self.bin_edges)
        return (e[:-1] + e[1:]) / 2

    def skewness(self) -> float:
        """Fisher-Pearson skewness of the binned distribution (bin centers)."""
        w = np.asarray(self.counts, dtype=float)
        if w.sum() == 0:
            return 0.0
        x = self.centers()
        mean = np.average(x, weights=w)
        m2 = np.average((x - mean) ** 2, weights=w)
        if m2 <= 1e-300:
            return 0.0
        m3 = np.average((x - mean) ** 3, weights=w)
        return float(m3 / m2 ** 1.5)

    def to_json(self) -> dict[str, Any]:
        return {"bin_edges": self.bin_edges, "counts": self.counts, "normalized": self.normalized}


def equal_width_edges(values: Sequence[float], n_bins: int) -> np.ndarray:
    lo, hi = float(min(values)), float(max(values))
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, n_bins + 1)


def bin_counts(values: Iterable[float], edges: np.ndarray) -> list[int]:
    """Counts over ``edges``; values outside the span fall into the end bins."""
    v = np.asarray(list(values), dtype=float)
    n = len(edges) - 1
    idx = np.searchsorted(edges[1:-1], v, side="right")
    return np.bincount(idx, minlength=n).astype(int).tolist()


def _span(values: Sequence[float]) -> float:
    return float(max(values)) - float(min(values))


def cut2bin(reference: Sequence[float], other: Sequence[float], n_bins: int = DEFAULT_BINS,
            designated: bool = True) -> tuple[Histogram, Histogram]:
    """Bin two value lists on shared equal-width edges.

    With a designated reference the edges span the reference.  Otherwise the
    input with the narrower domain supplies them.  Either way the histograms
    come back in argument order.
    """
    if n_bins < 1:
        raise DiscoveryError("n_bins must be positive")
    reference, other = list(reference), list(other)
    if not reference:
        raise DiscoveryError("empty reference")
    if designated:
        edges = equal_width_edges(reference, n_bins)
    else:
        if not other:
            raise DiscoveryError("empty input")
        narrow = reference if _span(reference) <= _span(other) else other
        edges = equal_width_edges(narrow, n_bins)
    e = edges.tolist()
    return Histogram(e, bin_counts(reference, edges)), Histogram(list(e), bin_counts(other, edges))


def jensen_shannon(p: Sequence[float], q: Sequence[float]) -> float:
    """Base-2 Jensen-Shannon divergence of two probability vectors."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DiscoveryError("distributions differ in length")
    m = 0.5 * (p + q)

    def kl(a: np.ndarray) -> float:
        nz = a > 0
        return float(np.sum(a[nz] * np.log2(a[nz] / m[nz])))

    d = 0.5 * kl(p) + 0.5 * kl(q)
    return min(max(d, 0.0), 1.0)


def compare_histograms(reference_values: Sequence[float], candidate_values: Sequence[float],
                       n_bins: int = DEFAULT_BINS) -> float:
    if not len(reference_values) or not len(candidate_values):
        raise DiscoveryError("empty input")
    ref, cand = cut2bin(reference_values, candidate_values, n_bins)
    return jensen_shannon(ref.normalized, cand.normalized)


@dataclass
class DivergenceSet:
    candidate_id: str
    reference_id: str
    values: dict[str, float]
    # metric -> (candidate skewness, reference skewness) on the shared bins
    skew: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __getitem__(self, metric: str) -> float:
        return self.values[metric]

    def right_skewed(self) -> bool:
        return all(m in self.skew and self.skew[m][0] > self.skew[m][1] for m in SKEW_METRICS)

    def to_json(self) -> dict[str, Any]:
        return {"candidate_id": self.candidate_id, "reference_id": self.reference_id,
                "values": self.values, "skew": {k: list(v) for k, v in self.skew.items()}}

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "DivergenceSet":
        return cls(d["candidate_id"], d["reference_id"], dict(d["values"]),
                   {k: tuple(v) for k, v in d.get("skew", {}).items()})


def divergence_set(candidate: MetricBundle, reference: MetricBundle, n_bins: int = DEFAULT_BINS,
                   candidate_id: str = "candidate", reference_id: str = "reference"
                   ) -> tuple[DivergenceSet, dict[str, tuple[Histogram, Histogram]]]:
    """Per-metric divergences of a candidate against the reference bundle.

    Also returns the binned (reference, candidate) histograms for export.
    """
    values, skew, hists = {}, {}, {}
    for m in METRICS:
        rv, cv = reference.values(m), candidate.values(m)
        if not rv or not cv:
            raise DiscoveryError(f"{m}: empty distribution")
        ref_h, cand_h = cut2bin(rv, cv, n_bins)
        values[m] = jensen_shannon(ref_h.normalized, cand_h.normalized)
        skew[m] = (cand_h.skewness(), ref_h.skewness())
        hists[m] = (ref_h, cand_h)
    return DivergenceSet(candidate_id, reference_id, values, skew), hists


@dataclass
class DiscoveryResult:
    v1: dict[str, int]
    v2: dict[str, int]
    v3: dict[str, int]
    l: set[str]
    top_k: dict[str, list[str]]
    mode: str = "prose"

    def to_json(self) -> dict[str, Any]:
        return {"mode": self.mode, "v1": self.v1, "v2": self.v2, "v3": self.v3,
                "l": sorted(self.l), "top_k": self.top_k}


def _propagative(s1: DivergenceSet, s2: DivergenceSet, mode: str) -> bool:
    if mode == "literal":
        return s2["nc"] + s2["mu"] > s1["ec"] + s2["mu"]
    return s2["nc"] * s2["z"] > s1["nc"] * s1["z"]


def _repartition(s1: DivergenceSet, s2: DivergenceSet, mode: str) -> bool:
    if mode == "literal":
        return s2["sc"] + s2["z"] > s1["sc"] + s2["z"]
    return s2.right_skewed()


def rank(scores: dict[str, int], k: int) -> list[str]:
    return sorted(scores, key=lambda c: (-scores[c], c))[:k]


def discover(sets: list[DivergenceSet], k: int = 5, mode: str = "prose") -> DiscoveryResult:
    """Pairwise scoring of candidates by how far each departs from the reference.

    ``prose`` uses the multiplicative propagativeness rule and the skewness
    test for repartitioning; ``literal`` follows the pseudocode's
    conditions term by term.
    """
    if mode not in ("prose", "literal"):
        raise DiscoveryError(f"unknown mode {mode!r}")
    if k < 1:
        raise DiscoveryError("k must be positive")
    if len(sets) < 2:
        raise DiscoveryError("need at least two divergence sets")
    if len({s.reference_id for s in sets}) > 1:
        raise DiscoveryError("divergence sets use different references")
    ids = [s.candidate_id for s in sets]
    if len(set(ids)) != len(ids):
        raise DiscoveryError("duplicate candidate ids")
    v1 = dict.fromkeys(ids, 0)
    v2 = dict.fromkeys(ids, 0)
    v3 = dict.fromkeys(ids, 0)
    flagged: set[str] = set()
    for s1, s2 in permutations(sets, 2):
        if s2["ev"] > s1["ev"]:
            v1[s2.candidate_id] += 1
            if s2["ec"] > s1["ec"]:
                v2[s2.candidate_id] += 1
                if _propagative(s1, s2, mode):
                    v3[s2.candidate_id] += 1
                if _repartition(s1, s2, mode):
                    flagged.add(s2.candidate_id)
    top = {"v1": rank(v1, k), "v2": rank(v2, k), "v3": rank(v3, k)}
    return DiscoveryResult(v1, v2, v3, flagged, top, mode)


# background sampling

def _walk_from(adj: list[list[int]], comp: list[int], target: int, rng: np.random.Generator,
               restart: float, stall_limit: int) -> list[int]:
    """Walk from ``comp[0]`` until ``target`` distinct nodes are reached."""
    if target >= len(comp):
        return sorted(comp)
    start = comp[0]
    anchor, cur = start, start
    visited = {start}
    order = [start]
    stall = 0
    while len(visited) < target:
        if rng.random() < restart:
            cur = anchor
        else:
            nbrs = adj[cur]
            cur = int(nbrs[rng.integers(len(nbrs))])
        if cur in visited:
            stall += 1
            if stall >= stall_limit:
                # stuck near the anchor: restart from somewhere already reached
                anchor = order[int(rng.integers(len(order)))]
                stall = 0
        else:
            visited.add(cur)
            order.append(cur)
            stall = 0
    return sorted(visited)


def sample_background(g: PropertyGraph, target_size: int, n_samples: int = DEFAULT_SAMPLES,
                      seed: int = 0, restart: float = RESTART_PROB,
                      stall_limit: int | None = None) -> list[PropertyGraph]:
    """Induced subgraphs grown by random walk with restart.

    The start node is uniform over nodes lying in components of at least
    ``target_size`` nodes.  If the walk finds nothing new for
    ``stall_limit`` steps its restart anchor moves to a random visited node.
    """
    if target_size < 1 or n_samples < 1:
        raise DiscoveryError("target_size and n_samples must be positive")
    p = project(g)
    comps = [c for c in p.components() if len(c) >= target_size]
    if not comps:
        raise DiscoveryError(f"no connected component with {target_size} nodes")
    adj = p.adj
    pool = np.concatenate([np.asarray(c) for c in comps])
    comp_of = {}
    for ci, c in enumerate(comps):
        for v in c:
            comp_of[v] = ci
    rng = np.random.default_rng(seed)
    limit = stall_limit if stall_limit is not None else 100 * target_size
    out = []
    for _ in range(n_samples):
        start = int(pool[rng.integers(len(pool))])
        comp = comps[comp_of[start]]
        # put the chosen start first so the walk begins there
        ordered = [start] + [v for v in comp if v != start]
        nodes = _walk_from(adj, ordered, target_size, rng, restart, limit)
        out.append(induced_subgraph(g, [p.ids[i] for i in nodes]))
    return out


def reference_bundle(view: PropertyGraph, target_size: int, n_samples: int = DEFAULT_SAMPLES,
                     seed: int = 0, edge_metric: str = "shortest_path") -> MetricBundle:
    """Metrics of the background view, pooled over walk samples when it is large.

    The largest component is measured directly when it has at most
    ``target_size`` nodes.
    """
    comp = largest_component(view)
    target = max(target_size, MIN_REFERENCE_TARGET)
    if len(comp) <= target:
        bundle = compute_metrics(comp, edge_metric=edge_metric)
        bundle.meta["sampled"] = False
        return bundle
    samples = sample_background(comp, target, n_samples, seed)
    bundle = MetricBundle.pooled([compute_metrics(s, edge_metric=edge_metric) for s in samples])
    bundle.meta.update({"sampled": True, "target_size": target, "seed": seed})
    return bundle


# repartitioning

def repartition_plan(candidate: CandidateSubgraph, original_terms: list[str],
                     subset_size: int = 1) -> list[InterestQuery]:
    """Follow-up queries, one per keyword subset, scoped to the candidate's posts."""
    terms = list(dict.fromkeys(original_terms))
    if not terms:
        raise DiscoveryError("empty keyword list")
    subset_size = min(subset_size, len(terms))
    scope = sorted(candidate.posts())
    return [InterestQuery(any_k_terms=(list(sub), 1), scope=scope)
            for sub in combinations(terms, subset_size)]


# topical navigability

def topic_clusters(hc_view: PropertyGraph) -> list[set[str]]:
    """Connected groups of hashtags joined by strong co-occurrence.

    Edges whose count falls below the knee of the count distribution are
    dropped first.
    """
    counts = sorted((int(e.attrs.get("count", 1)) for e in hc_view.edges_of(EdgeKind.COMPUTED, HC)),
                    reverse=True)
    if not counts:
        return []
    threshold = counts[-1]
    if len(counts) >= 3 and counts[0] > counts[-1]:
        threshold = counts[max(detect_knee(counts).knee_index - 1, 0)]
    strong = induced_subgraph(
        hc_view, hc_view.nodes,
        edge_filter=lambda e: e.label == HC and int(e.attrs.get("count", 1)) >= threshold)
    return [c for c in connected_components(strong) if len(c) >= 2]


def topical_navigability(candidate: PropertyGraph, reference: MetricBundle,
                         topics: list[set[str]], min_support: int = TOPIC_MIN_SUPPORT,
                         n_bins: int = DEFAULT_BINS) -> dict[int, float]:
    """Edge-betweenness divergence of each well-supported topic inside a candidate."""
    posts = candidate.nodes_of(NodeKind.POST)
    out = {}
    for ti, topic in enumerate(topics):
        support = [p for p in posts
                   if any(e.head in topic for e in candidate.out_edges(p, EdgeKind.USES))]
        if len(support) < min_support:
            continue
        view = network_view(candidate, "hashtag")
        sub = induced_subgraph(view, [h for h in view.nodes if h in topic])
        if not sub.edges:
            continue
        ec = compute_metrics(sub).values("ec")
        out[ti] = compare_histograms(reference.values("ec"), ec, n_bins)
    return out


def load_divergence_sets(path) -> list[DivergenceSet]:
    with open(path) as fh:
        doc = json.load(fh)
    return [DivergenceSet.from_json(d) for d in doc["divergence_sets"]]

