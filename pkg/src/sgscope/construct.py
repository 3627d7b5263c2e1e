"""Candidate subgraphs built from node groups, and the conditions they must pass."""

from __future__ import annotations

import json
import operator
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np
from scipy.optimize import minimize_scalar

from .graph import (
    EdgeKind, NodeKind, PropertyGraph, base_edges_only, connected_components,
    induced_subgraph,
)
from .grouping import NodeGroup
from .ingest import add_computed_layers

ASSOCIATED_EDGES = {
    EdgeKind.WRITES: False,    # author -> post, the post is the head
    EdgeKind.USES: True,
    EdgeKind.LINKS: True,
    EdgeKind.MENTIONS: True,
}

DEFAULT_MIN_NODES = 10
DEFAULT_DIVERSITY_THRESHOLD = 0.1
ALPHA_RANGE = (1.5, 3.5)
MIN_DISTINCT_VALUES = 5


class ConstructError(ValueError):
    pass


@dataclass
class CandidateSubgraph:
    id: str
    key: tuple
    rule: str
    graph: PropertyGraph
    group_posts: frozenset[str] = frozenset()
    rejection: str | None = None

    @property
    def post_count(self) -> int:
        return len(self.graph.nodes_of(NodeKind.POST))

    def posts(self) -> set[str]:
        return set(self.graph.nodes_of(NodeKind.POST))

    def manifest(self) -> dict[str, Any]:
        return {"id": self.id, "key": list(self.key), "rule": self.rule,
                "nodes": len(self.graph), "edges": len(self.graph.edges),
                "post_count": self.post_count, "rejection": self.rejection}


def associated_nodes(g: PropertyGraph, p: str) -> set[str]:
    """Author, hashtags, URLs and mentioned users of post ``p``."""
    out = set()
    for e in g.incident(p):
        post_is_tail = ASSOCIATED_EDGES.get(e.kind)
        if post_is_tail is None:
            continue
        if post_is_tail and e.tail == p:
            out.add(e.head)
        elif not post_is_tail and e.head == p:
            out.add(e.tail)
    return out


def _materialize(gprime: PropertyGraph, nodes: Iterable[str]) -> PropertyGraph:
    sub = induced_subgraph(gprime, nodes, edge_filter=base_edges_only)
    return add_computed_layers(sub, umuhd=False)


def _group_posts(gprime: PropertyGraph, group: NodeGroup) -> list[str]:
    return sorted(m for m in group.members if m in gprime.nodes and gprime.kind(m) is NodeKind.POST)


def _cid(group: NodeGroup, rule: str) -> str:
    return rule + ":" + "/".join(str(k) for k in group.key)


def construct_g1(gprime: PropertyGraph, group: NodeGroup, cid: str | None = None) -> CandidateSubgraph:
    """Relaxed induced subgraph: the group's posts and everything directly attached."""
    for m in group.members:
        if m not in gprime.nodes:
            raise ConstructError(f"group member {m!r} not in graph")
    posts = _group_posts(gprime, group)
    if not posts:
        raise ConstructError(f"group {group.key!r} contains no posts")
    nodes = set(posts)
    for p in posts:
        nodes |= associated_nodes(gprime, p)
    return CandidateSubgraph(cid or _cid(group, "G1"), group.key, "G1",
                             _materialize(gprime, nodes), frozenset(posts))


def construct_g2(gprime: PropertyGraph, group: NodeGroup, cid: str | None = None) -> CandidateSubgraph:
    """Mention network among the group's posts, extended with their attachments.

    A group without mention edges gives an empty candidate, which the size
    condition later rejects.
    """
    for m in group.members:
        if m not in gprime.nodes:
            raise ConstructError(f"group member {m!r} not in graph")
    posts = _group_posts(gprime, group)
    if not posts:
        raise ConstructError(f"group {group.key!r} contains no posts")
    mentioning = [p for p in posts if gprime.out_edges(p, EdgeKind.MENTIONS)]
    nodes = set(mentioning)
    for p in mentioning:
        nodes |= associated_nodes(gprime, p)
    return CandidateSubgraph(cid or _cid(group, "G2"), group.key, "G2",
                             _materialize(gprime, nodes), frozenset(mentioning))


def construct_g3(gprime: PropertyGraph, base: CandidateSubgraph, cid: str | None = None) -> CandidateSubgraph:
    """Base candidate plus the first-order neighborhood of its hashtags and mentioned users."""
    g = base.graph
    seeds = set(g.nodes_of(NodeKind.HASHTAG))
    seeds |= {e.head for e in g.edges_of(EdgeKind.MENTIONS)}
    nodes = set(g.nodes)
    new_posts = set()
    for s in seeds:
        for nb in gprime.neighbors(s, [k for k in EdgeKind if k is not EdgeKind.COMPUTED]):
            nodes.add(nb)
            if gprime.kind(nb) is NodeKind.POST:
                new_posts.add(nb)
    for p in new_posts:
        nodes |= associated_nodes(gprime, p)
    rule = f"G3:{base.rule}"
    new_id = cid or base.id.replace(base.rule, rule, 1)
    return CandidateSubgraph(new_id, base.key, rule, _materialize(gprime, nodes), base.group_posts)


RULES = {"g1": construct_g1, "g2": construct_g2}


def construct(gprime: PropertyGraph, groups: list[NodeGroup], rule: str) -> list[CandidateSubgraph]:
    rule = rule.lower()
    out = []
    for group in groups:
        if not any(m in gprime.nodes and gprime.kind(m) is NodeKind.POST for m in group.members):
            continue
        if rule in RULES:
            out.append(RULES[rule](gprime, group))
        elif rule in ("g3", "g3:g1", "g3:g2"):
            base_rule = "g1" if rule in ("g3", "g3:g1") else "g2"
            out.append(construct_g3(gprime, RULES[base_rule](gprime, group)))
        else:
            raise ConstructError(f"unknown construction rule {rule!r}")
    return out


# filtering

COMPARATORS = {
    "==": operator.eq, "!=": operator.ne, "<": operator.lt, "<=": operator.le,
    ">": operator.gt, ">=": operator.ge,
    "contains": lambda a, b: b in a if isinstance(a, (str, list)) else False,
}


@dataclass
class Predicate:
    target: str          # node kind, or edge kind / computed label
    attribute: str
    comparator: str
    value: Any

    def __post_init__(self) -> None:
        if self.comparator not in COMPARATORS:
            raise ConstructError(f"unknown comparator {self.comparator!r}")

    def holds(self, attrs: dict[str, Any]) -> bool:
        if self.attribute not in attrs:
            return False
        try:
            return bool(COMPARATORS[self.comparator](attrs[self.attribute], self.value))
        except TypeError:
            return False

    @classmethod
    def from_json(cls, d) -> "Predicate":
        if isinstance(d, (list, tuple)):
            return cls(*d)
        return cls(d["target"], d["attribute"], d["comparator"], d["value"])


@dataclass
class CandidateFilter:
    min_nodes: int = DEFAULT_MIN_NODES
    node_predicates: list[Predicate] = field(default_factory=list)
    edge_predicates: list[Predicate] = field(default_factory=list)
    diversity_attribute: str | None = None
    diversity_threshold: float = DEFAULT_DIVERSITY_THRESHOLD

    def __post_init__(self) -> None:
        if self.min_nodes < 2:
            raise ConstructError("min_nodes must be at least 2")

    @classmethod
    def from_json(cls, doc: dict[str, Any] | str | None) -> "CandidateFilter":
        if doc is None:
            return cls()
        if isinstance(doc, str):
            doc = json.loads(doc)
        return cls(
            min_nodes=doc.get("min_nodes", DEFAULT_MIN_NODES),
            node_predicates=[Predicate.from_json(p) for p in doc.get("node_predicates", [])],
            edge_predicates=[Predicate.from_json(p) for p in doc.get("edge_predicates", [])],
            diversity_attribute=doc.get("diversity_attribute"),
            diversity_threshold=doc.get("diversity_threshold", DEFAULT_DIVERSITY_THRESHOLD),
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "min_nodes": self.min_nodes,
            "node_predicates": [vars(p) for p in self.node_predicates],
            "edge_predicates": [vars(p) for p in self.edge_predicates],
            "diversity_attribute": self.diversity_attribute,
            "diversity_threshold": self.diversity_threshold,
        }


def _edge_target(e) -> str:
    return e.label or e.kind.value


def _c2_ok(g: PropertyGraph, f: CandidateFilter) -> bool:
    for pred in f.node_predicates:
        for node in g.nodes.values():
            if node.kind.value == pred.target and not pred.holds(node.attrs):
                return False
    for pred in f.edge_predicates:
        for e in g.edges.values():
            if _edge_target(e) == pred.target and not pred.holds(e.attrs):
                return False
    return True


def attribute_values(g: PropertyGraph, attribute: str) -> list[str]:
    """All text values of ``attribute`` across nodes, list values flattened."""
    out = []
    for node in g.nodes.values():
        v = node.attrs.get(attribute)
        if isinstance(v, list):
            out.extend(v)
        elif isinstance(v, str):
            out.append(v)
    return out


def filter_candidates(cands: list[CandidateSubgraph], f: CandidateFilter
                      ) -> tuple[list[CandidateSubgraph], list[CandidateSubgraph]]:
    """Apply the connectivity/size, predicate and diversity conditions.

    Disconnected candidates are replaced by their largest component.
    Returns ``(kept, rejected)``; rejected candidates carry ``rejection``.
    """
    kept, rejected = [], []
    for cand in cands:
        comps = connected_components(cand.graph)
        best = max(comps, key=len) if comps else set()
        if len(best) < f.min_nodes:
            cand.rejection = "C1"
            rejected.append(cand)
            continue
        if len(best) < len(cand.graph):
            cand.graph = induced_subgraph(cand.graph, best)
        if not _c2_ok(cand.graph, f):
            cand.rejection = "C2"
            rejected.append(cand)
            continue
        if f.diversity_attribute:
            rep = diversity_deviation(attribute_values(cand.graph, f.diversity_attribute),
                                      f.diversity_threshold, attribute=f.diversity_attribute)
            if not rep.deviates:
                cand.rejection = "C3"
                rejected.append(cand)
                continue
        kept.append(cand)
    return kept, rejected


# diversity

@dataclass
class DiversityReport:
    attribute: str
    values: list[str]
    spectrum: list[int]
    powerlaw_fit_distance: float
    deviates: bool
    alpha: float | None = None
    low_support: bool = False


def _harmonic(r_max: int, alpha: float) -> np.ndarray:
    return np.cumsum(np.arange(1, r_max + 1, dtype=float) ** -alpha)


def fit_rank_power_law(spectrum: list[int]) -> tuple[float, float]:
    """Fit P(r) ~ r^-alpha on ranks 1..R to rank-ordered counts.

    Each observation contributes its value's frequency rank.  The exponent
    is the maximum-likelihood estimate within ``ALPHA_RANGE``; the returned
    distance is the Kolmogorov-Smirnov statistic between empirical and fitted
    rank CDFs.
    """
    counts = np.asarray(spectrum, dtype=float)
    r_max = len(counts)
    n = counts.sum()
    log_r = np.log(np.arange(1, r_max + 1))
    sum_log = float(counts @ log_r)

    def nll(alpha: float) -> float:
        return alpha * sum_log + n * np.log(_harmonic(r_max, alpha)[-1])

    res = minimize_scalar(nll, bounds=ALPHA_RANGE, method="bounded",
                          options={"xatol": 1e-8})
    alpha = float(res.x)
    h = _harmonic(r_max, alpha)
    fitted = h / h[-1]
    empirical = np.cumsum(counts) / n
    return alpha, float(np.max(np.abs(empirical - fitted)))


def diversity_deviation(values: Iterable[str], threshold: float = DEFAULT_DIVERSITY_THRESHOLD,
                        attribute: str = "") -> DiversityReport:
    """Does the value-frequency spectrum depart from a power law?"""
    values = list(values)
    freq = Counter(values)
    spectrum = sorted(freq.values(), reverse=True)
    if len(spectrum) < MIN_DISTINCT_VALUES:
        return DiversityReport(attribute, values, spectrum, 0.0, False, None, True)
    alpha, dist = fit_rank_power_law(spectrum)
    return DiversityReport(attribute, values, spectrum, dist, dist > threshold, alpha)
