"""Group-by over graph nodes and automatic choice of grouping attributes."""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Union

import numpy as np

from .graph import EdgeKind, GraphError, NodeKind, PropertyGraph

TRANSFORMS = ("identity", "date", "bin")


class GroupingError(ValueError):
    pass


@dataclass(frozen=True)
class GroupingFunction:
    kind: NodeKind
    attribute: str
    transform: str = "identity"
    width: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NodeKind(self.kind))
        if self.transform not in TRANSFORMS:
            raise GroupingError(f"unknown transform {self.transform!r}")
        if self.transform == "bin" and not (self.width and self.width > 0):
            raise GroupingError("bin transform needs a positive width")

    def apply(self, value: Any) -> Any:
        if self.transform == "date":
            if not isinstance(value, datetime):
                raise GroupingError(f"{self.attribute}: date transform needs a timestamp")
            return value.date().isoformat()
        if self.transform == "bin":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise GroupingError(f"{self.attribute}: bin transform needs a number")
            return int(value // self.width)
        if isinstance(value, datetime):
            return value.isoformat()
        return value

    def to_json(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind.value, "attribute": self.attribute,
                             "transform": self.transform}
        if self.width is not None:
            d["width"] = self.width
        return d

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "GroupingFunction":
        return cls(NodeKind(d["kind"]), d["attribute"], d.get("transform", "identity"), d.get("width"))


@dataclass(frozen=True)
class AttributeGrouping:
    functions: tuple[GroupingFunction, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "functions", tuple(self.functions))
        if not 1 <= len(self.functions) <= 2:
            raise GroupingError("attribute grouping takes one or two grouping functions")
        if len({f.kind for f in self.functions}) != 1:
            raise GroupingError("attribute grouping functions must share a node kind")

    def to_json(self) -> dict[str, Any]:
        return {"mode": "attributes", "functions": [f.to_json() for f in self.functions]}


@dataclass(frozen=True)
class PatternGrouping:
    """``(tail)-[label]->(head)`` with one grouping function per endpoint."""

    tail: GroupingFunction
    label: str
    head: GroupingFunction

    def to_json(self) -> dict[str, Any]:
        return {"mode": "pattern", "tail": self.tail.to_json(), "label": self.label,
                "head": self.head.to_json()}


GroupingSpec = Union[AttributeGrouping, PatternGrouping]


def spec_from_json(doc: dict[str, Any] | str) -> GroupingSpec:
    if isinstance(doc, str):
        doc = json.loads(doc)
    mode = doc.get("mode")
    if mode == "attributes":
        return AttributeGrouping(tuple(GroupingFunction.from_json(f) for f in doc["functions"]))
    if mode == "pattern":
        if isinstance(doc.get("label"), list):
            raise GroupingError("pattern grouping takes exactly one edge label")
        return PatternGrouping(GroupingFunction.from_json(doc["tail"]), doc["label"],
                               GroupingFunction.from_json(doc["head"]))
    raise GroupingError(f"unknown grouping mode {mode!r}")


@dataclass
class NodeGroup:
    key: tuple
    members: frozenset[str]

    def __post_init__(self) -> None:
        self.members = frozenset(self.members)
        if not self.members:
            raise GroupingError("node groups cannot be empty")

    def to_json(self) -> dict[str, Any]:
        return {"key": list(self.key), "member_ids": sorted(self.members)}

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "NodeGroup":
        return cls(tuple(d["key"]), frozenset(d["member_ids"]))


def _sort_key(key: tuple) -> tuple:
    return tuple((type(v).__name__, v) for v in key)


def _check_attribute(g: PropertyGraph, fn: GroupingFunction) -> None:
    if not any(n.kind is fn.kind and fn.attribute in n.attrs for n in g.nodes.values()):
        raise GroupingError(f"unknown attribute {fn.attribute!r} on {fn.kind.value} nodes")


def group_by_attributes(g: PropertyGraph, spec: AttributeGrouping) -> list[NodeGroup]:
    """Disjoint groups of one node kind keyed by transformed attribute tuple.

    Nodes missing any grouping attribute are left out.
    """
    for fn in spec.functions:
        _check_attribute(g, fn)
    kind = spec.functions[0].kind
    buckets: dict[tuple, list[str]] = defaultdict(list)
    for node in g.nodes.values():
        if node.kind is not kind:
            continue
        values = [node.attrs.get(fn.attribute) for fn in spec.functions]
        if any(v is None for v in values):
            continue
        if any(isinstance(v, list) for v in values):
            raise GroupingError("list-valued attributes need pattern grouping")
        key = tuple(fn.apply(v) for fn, v in zip(spec.functions, values))
        buckets[key].append(node.id)
    return [NodeGroup(k, frozenset(buckets[k])) for k in sorted(buckets, key=_sort_key)]


def _edge_matches(label: str):
    try:
        kind = EdgeKind(label)
        return lambda e: e.kind is kind and not e.label
    except ValueError:
        return lambda e: e.kind is EdgeKind.COMPUTED and e.label == label


def group_by_pattern(g: PropertyGraph, spec: PatternGrouping) -> list[NodeGroup]:
    """Overlapping groups, one per distinct (tail value, head value) over matching edges."""
    match = _edge_matches(spec.label)
    edges = [e for e in g.edges.values() if match(e)]
    if not edges:
        raise GroupingError(f"unknown edge label {spec.label!r}")
    _check_attribute(g, spec.tail)
    _check_attribute(g, spec.head)
    buckets: dict[tuple, set[str]] = defaultdict(set)
    for e in edges:
        t, h = g.nodes[e.tail], g.nodes[e.head]
        if t.kind is not spec.tail.kind or h.kind is not spec.head.kind:
            continue
        tv, hv = t.attrs.get(spec.tail.attribute), h.attrs.get(spec.head.attribute)
        if tv is None or hv is None:
            continue
        key = (spec.tail.apply(tv), spec.head.apply(hv))
        buckets[key].update((e.tail, e.head))
    return [NodeGroup(k, frozenset(buckets[k])) for k in sorted(buckets, key=_sort_key)]


def group_nodes(g: PropertyGraph, spec: GroupingSpec) -> list[NodeGroup]:
    if isinstance(spec, AttributeGrouping):
        return group_by_attributes(g, spec)
    return group_by_pattern(g, spec)


# knee detection

@dataclass
class KneeResult:
    frequencies: list[float]
    knee_index: int
    curvature: list[float]
    values: list[Any] = field(default_factory=list)

    @property
    def pre_elbow_values(self) -> list[Any]:
        if self.values:
            return self.values[:self.knee_index]
        return self.frequencies[:self.knee_index]


def curvature(frequencies) -> np.ndarray:
    """Discrete curvature of a rank-ordered curve rescaled to the unit square.

    Central differences at interior points; the two endpoints get 0.
    """
    f = np.asarray(frequencies, dtype=float)
    n = len(f)
    span = f.max() - f.min()
    y = (f - f.min()) / span if span > 0 else np.zeros(n)
    h = 1.0 / (n - 1)
    d1 = (y[2:] - y[:-2]) / (2 * h)
    d2 = (y[2:] - 2 * y[1:-1] + y[:-2]) / h ** 2
    k = np.zeros(n)
    k[1:-1] = np.abs(d2) / (1.0 + d1 ** 2) ** 1.5
    return k


def detect_knee(frequencies, values=None) -> KneeResult:
    """Index of maximum curvature of a non-increasing frequency curve.

    Ties go to the smallest index, so a straight line yields index 1.
    """
    f = [float(x) for x in frequencies]
    if len(f) < 3:
        raise GroupingError("knee detection needs at least 3 points")
    if any(b > a for a, b in zip(f, f[1:])):
        raise GroupingError("frequencies must be non-increasing")
    k = curvature(f)
    interior = k[1:-1]
    idx = 1 + int(np.flatnonzero(interior == interior.max())[0])
    return KneeResult(f, idx, k.tolist(), list(values) if values is not None else [])


# automatic grouping

# one-hop relations from posts usable as grouping attributes:
# name -> (edge kind, post is tail?, other kind, other attribute)
RELATIONAL_ATTRIBUTES = {
    "hashtag": (EdgeKind.USES, True, NodeKind.HASHTAG, "text"),
    "mention": (EdgeKind.MENTIONS, True, NodeKind.USER, "user_id"),
    "url": (EdgeKind.LINKS, True, NodeKind.RESOURCE, "url"),
    "author": (EdgeKind.WRITES, False, NodeKind.USER, "user_id"),
}
EXCLUDED_POST_ATTRIBUTES = {"post_id", "text", "created_at"}

DATE_FN = GroupingFunction(NodeKind.POST, "created_at", "date")


def value_frequencies(g: PropertyGraph, attribute: str) -> Counter:
    """Post counts per value of a scalar post attribute or a one-hop relation."""
    counts: Counter = Counter()
    if attribute in RELATIONAL_ATTRIBUTES:
        kind, post_is_tail, other_kind, other_attr = RELATIONAL_ATTRIBUTES[attribute]
        for e in g.edges_of(kind):
            other = e.head if post_is_tail else e.tail
            value = g.attr(other, other_attr)
            if value is not None:
                counts[value] += 1
        return counts
    for p in g.nodes_of(NodeKind.POST):
        value = g.attr(p, attribute)
        if value is not None and not isinstance(value, (list, datetime)):
            counts[value] += 1
    return counts


def candidate_attributes(g: PropertyGraph) -> list[str]:
    scalar = set()
    for p in g.nodes_of(NodeKind.POST):
        for name, value in g.nodes[p].attrs.items():
            if name in EXCLUDED_POST_ATTRIBUTES or isinstance(value, (list, datetime)):
                continue
            scalar.add(name)
    relational = [name for name, (kind, *_rest) in RELATIONAL_ATTRIBUTES.items()
                  if g.edges_of(kind)]
    return sorted(scalar) + relational


def attribute_knees(g: PropertyGraph) -> dict[str, KneeResult]:
    out = {}
    for name in candidate_attributes(g):
        counts = value_frequencies(g, name)
        if len(counts) < 3:
            continue
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], str(kv[0])))
        out[name] = detect_knee([c for _, c in ranked], [v for v, _ in ranked])
    return out


def choose_attribute(pre_elbow_sizes: dict[str, int]) -> str | None:
    """Attribute with the most pre-elbow values; first listed wins ties."""
    best, best_size = None, 0
    for name, size in pre_elbow_sizes.items():
        if size > best_size:
            best, best_size = name, size
    return best


def _spec_for(name: str) -> GroupingSpec:
    if name in RELATIONAL_ATTRIBUTES:
        kind, post_is_tail, other_kind, other_attr = RELATIONAL_ATTRIBUTES[name]
        other = GroupingFunction(other_kind, other_attr)
        if post_is_tail:
            return PatternGrouping(DATE_FN, kind.value, other)
        return PatternGrouping(other, kind.value, DATE_FN)
    return AttributeGrouping((DATE_FN, GroupingFunction(NodeKind.POST, name)))


def auto_generate_grouping(g: PropertyGraph, mode: str = "attributes") -> GroupingSpec:
    """Pick grouping objects automatically; the posting date is always one of them.

    ``attributes``: date plus the attribute with the most values before the
    elbow of its frequency curve.  Relational attributes (hashtag, mention,
    url, author) can only be grouped through their edge, so choosing one
    yields the equivalent single-edge pattern.  ``pattern``: among the
    single-edge patterns incident to posts, the one with the fewest edges.
    """
    if not g.nodes_of(NodeKind.POST):
        raise GroupingError("graph has no posts")
    if mode == "attributes":
        knees = attribute_knees(g)
        best = choose_attribute({k: len(v.pre_elbow_values) for k, v in knees.items()})
        if best is None:
            return AttributeGrouping((DATE_FN,))
        return _spec_for(best)
    if mode == "pattern":
        sizes = {name: len(g.edges_of(kind))
                 for name, (kind, *_rest) in RELATIONAL_ATTRIBUTES.items()}
        sizes = {k: v for k, v in sizes.items() if v > 0}
        if not sizes:
            return AttributeGrouping((DATE_FN,))
        best = min(sizes, key=lambda k: (sizes[k], k))
        return _spec_for(best)
    raise GroupingError(f"unknown auto-grouping mode {mode!r}")
