"""Typed temporal property graph.

Nodes carry a :class:`NodeKind` and a flat attribute map; edges carry an
:class:`EdgeKind`, an optional label (the type name of computed edges) and
their own attribute map.  Base edges are directed.  Computed edges whose
label is registered in :data:`UNDIRECTED_LABELS` are stored once with
canonical ``(min, max)`` endpoint order.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from enum import Enum
from typing import Any, Iterable, Iterator

SNAPSHOT_HEADER = "sgscope-graph v1"

HC = "HC"
COMENTION = "COMENTION"
UMUHD = "UMUHD"
UNDIRECTED_LABELS = frozenset({HC, COMENTION})


class GraphError(ValueError):
    """Raised on invalid graph construction or lookup."""


class SnapshotError(GraphError):
    """Raised when a snapshot payload cannot be decoded."""


class NodeKind(str, Enum):
    USER = "user"
    POST = "post"
    HASHTAG = "hashtag"
    TERM = "term"
    RESOURCE = "resource"


class EdgeKind(str, Enum):
    WRITES = "writes"
    USES = "uses"
    MENTIONS = "mentions"
    REPOST_OF = "repost_of"
    REPLY_TO = "reply_to"
    CONTAINS = "contains"
    LINKS = "links"
    COMPUTED = "computed"


# (tail kind, head kind) allowed for each base edge kind
ENDPOINT_KINDS: dict[EdgeKind, tuple[NodeKind, NodeKind]] = {
    EdgeKind.WRITES: (NodeKind.USER, NodeKind.POST),
    EdgeKind.USES: (NodeKind.POST, NodeKind.HASHTAG),
    EdgeKind.MENTIONS: (NodeKind.POST, NodeKind.USER),
    EdgeKind.REPOST_OF: (NodeKind.POST, NodeKind.POST),
    EdgeKind.REPLY_TO: (NodeKind.POST, NodeKind.POST),
    EdgeKind.CONTAINS: (NodeKind.POST, NodeKind.TERM),
    EdgeKind.LINKS: (NodeKind.POST, NodeKind.RESOURCE),
}

COMPUTED_ENDPOINT_KINDS: dict[str, tuple[NodeKind, NodeKind]] = {
    HC: (NodeKind.HASHTAG, NodeKind.HASHTAG),
    COMENTION: (NodeKind.USER, NodeKind.USER),
    UMUHD: (NodeKind.USER, NodeKind.USER),
}

TEMPORAL_EDGES = (EdgeKind.REPOST_OF, EdgeKind.REPLY_TO)
POST_POST_EDGES = TEMPORAL_EDGES


def utc(ts: float | int | str | datetime) -> datetime:
    """Coerce epoch seconds, ISO-8601 text or a datetime to an aware UTC datetime."""
    if isinstance(ts, datetime):
        if ts.tzinfo is None:
            return ts.replace(tzinfo=timezone.utc)
        return ts.astimezone(timezone.utc)
    if isinstance(ts, str):
        text = ts.strip()
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        return utc(datetime.fromisoformat(text))
    return datetime.fromtimestamp(ts, tz=timezone.utc)


def _check_value(name: str, value: Any) -> Any:
    if isinstance(value, bool):
        raise GraphError(f"attribute {name!r}: booleans are not attribute values")
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise GraphError(f"attribute {name!r}: non-finite real {value!r}")
        return value
    if isinstance(value, datetime):
        value = utc(value)
        if value.timestamp() < 0:
            raise GraphError(f"attribute {name!r}: timestamp before epoch")
        return value
    if isinstance(value, (list, tuple)):
        if not all(isinstance(v, str) for v in value):
            raise GraphError(f"attribute {name!r}: lists may only hold text")
        return list(value)
    raise GraphError(f"attribute {name!r}: unsupported value type {type(value).__name__}")


def check_attrs(attrs: dict[str, Any] | None) -> dict[str, Any]:
    if not attrs:
        return {}
    out = {}
    for name, value in attrs.items():
        if not isinstance(name, str) or not name:
            raise GraphError(f"attribute names must be non-empty text, got {name!r}")
        if value is None:
            continue
        out[name] = _check_value(name, value)
    return out


@dataclass
class Node:
    id: str
    kind: NodeKind
    attrs: dict[str, Any] = field(default_factory=dict)


@dataclass
class Edge:
    id: str
    tail: str
    head: str
    kind: EdgeKind
    label: str = ""
    key: str = ""
    attrs: dict[str, Any] = field(default_factory=dict)

    @property
    def directed(self) -> bool:
        return not (self.kind is EdgeKind.COMPUTED and self.label in UNDIRECTED_LABELS)

    def identity(self) -> tuple[str, str, str, str, str]:
        return (self.tail, self.head, self.kind.value, self.label, self.key)


class PropertyGraph:
    """Single-writer property graph; call :meth:`seal` to freeze it.

    Parallel edges between the same pair are kept only when their kind,
    label or discriminator key differ.  Re-inserting an existing
    ``(tail, head, kind, label, key)`` merges attributes, last writer wins.
    """

    def __init__(self) -> None:
        self.nodes: dict[str, Node] = {}
        self.edges: dict[str, Edge] = {}
        self._adj: dict[str, list[str]] = {}
        self._by_identity: dict[tuple, str] = {}
        self._next_node = 0
        self._next_edge = 0
        self.sealed = False

    # construction

    def _writable(self) -> None:
        if self.sealed:
            raise GraphError("graph is sealed")

    def add_node(self, kind: NodeKind, attrs: dict[str, Any] | None = None,
                 node_id: str | None = None) -> str:
        self._writable()
        kind = NodeKind(kind)
        attrs = check_attrs(attrs)
        if kind is NodeKind.RESOURCE and not attrs.get("resource_type"):
            raise GraphError("attribute 'resource_type': resource nodes need a non-empty type tag")
        if node_id is None:
            while f"n{self._next_node}" in self.nodes:
                self._next_node += 1
            node_id = f"n{self._next_node}"
            self._next_node += 1
        if not node_id or any(c.isspace() for c in node_id):
            raise GraphError(f"invalid node id {node_id!r}")
        if node_id in self.nodes:
            raise GraphError(f"duplicate node id {node_id!r}")
        self.nodes[node_id] = Node(node_id, kind, attrs)
        self._adj[node_id] = []
        return node_id

    def add_edge(self, tail: str, head: str, kind: EdgeKind,
                 attrs: dict[str, Any] | None = None, label: str = "",
                 key: str = "", edge_id: str | None = None) -> str:
        self._writable()
        kind = EdgeKind(kind)
        for end in (tail, head):
            if end not in self.nodes:
                raise GraphError(f"dangling endpoint {end!r}")
        attrs = check_attrs(attrs)
        ntail, nhead = self.nodes[tail], self.nodes[head]
        if kind is EdgeKind.COMPUTED:
            if not label:
                raise GraphError("computed edges need a type name")
            expected = COMPUTED_ENDPOINT_KINDS.get(label)
            if label in UNDIRECTED_LABELS and head < tail:
                tail, head = head, tail
        else:
            if label:
                raise GraphError("only computed edges carry a label")
            expected = ENDPOINT_KINDS[kind]
        if expected and (ntail.kind, nhead.kind) != expected:
            raise GraphError(
                f"{label or kind.value} edge must connect {expected[0].value}->{expected[1].value}, "
                f"got {ntail.kind.value}->{nhead.kind.value}")
        if kind is EdgeKind.CONTAINS:
            count = attrs.get("count", 1)
            if not isinstance(count, int) or count < 1:
                raise GraphError("attribute 'count': contains edges need a positive count")
            attrs.setdefault("count", count)
        if kind in TEMPORAL_EDGES:
            t2, t1 = ntail.attrs.get("created_at"), nhead.attrs.get("created_at")
            if t2 is None or t1 is None:
                raise GraphError(f"{kind.value} requires timestamps on both posts")
            if not t2 > t1:
                raise GraphError(f"{kind.value} {tail}->{head}: later post must point to earlier post")
        if tail == head and kind is EdgeKind.COMPUTED and label in UNDIRECTED_LABELS:
            raise GraphError(f"{label} edges cannot be self-loops")

        ident = (tail, head, kind.value, label, key)
        existing = self._by_identity.get(ident)
        if existing is not None:
            self.edges[existing].attrs.update(attrs)
            return existing
        if edge_id is None:
            while f"e{self._next_edge}" in self.edges:
                self._next_edge += 1
            edge_id = f"e{self._next_edge}"
            self._next_edge += 1
        if not edge_id or any(c.isspace() for c in edge_id) or edge_id in self.edges:
            raise GraphError(f"invalid or duplicate edge id {edge_id!r}")
        self.edges[edge_id] = Edge(edge_id, tail, head, kind, label, key, attrs)
        self._by_identity[ident] = edge_id
        self._adj[tail].append(edge_id)
        if head != tail:
            self._adj[head].append(edge_id)
        return edge_id

    def seal(self) -> "PropertyGraph":
        self.sealed = True
        return self

    # queries

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id: object) -> bool:
        return node_id in self.nodes

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise GraphError(f"unknown node {node_id!r}") from None

    def kind(self, node_id: str) -> NodeKind:
        return self.node(node_id).kind

    def attr(self, node_id: str, name: str, default: Any = None) -> Any:
        return self.node(node_id).attrs.get(name, default)

    def nodes_of(self, kind: NodeKind) -> list[str]:
        return [n.id for n in self.nodes.values() if n.kind is kind]

    def incident(self, node_id: str) -> list[Edge]:
        return [self.edges[e] for e in self._adj[node_id]]

    def out_edges(self, node_id: str, kind: EdgeKind | None = None) -> list[Edge]:
        return [e for e in self.incident(node_id)
                if e.tail == node_id and (kind is None or e.kind is kind)]

    def in_edges(self, node_id: str, kind: EdgeKind | None = None) -> list[Edge]:
        return [e for e in self.incident(node_id)
                if e.head == node_id and (kind is None or e.kind is kind)]

    def neighbors(self, node_id: str, kinds: Iterable[EdgeKind] | None = None) -> list[str]:
        """Undirected neighbors, optionally through the given edge kinds only."""
        allowed = None if kinds is None else set(kinds)
        seen: dict[str, None] = {}
        for e in self.incident(node_id):
            if allowed is not None and e.kind not in allowed:
                continue
            other = e.head if e.tail == node_id else e.tail
            seen.setdefault(other, None)
        return list(seen)

    def edges_of(self, kind: EdgeKind, label: str | None = None) -> list[Edge]:
        return [e for e in self.edges.values()
                if e.kind is kind and (label is None or e.label == label)]

    def find_edge(self, tail: str, head: str, kind: EdgeKind, label: str = "",
                  key: str = "") -> Edge | None:
        kind = EdgeKind(kind)
        if kind is EdgeKind.COMPUTED and label in UNDIRECTED_LABELS and head < tail:
            tail, head = head, tail
        eid = self._by_identity.get((tail, head, kind.value, label, key))
        return None if eid is None else self.edges[eid]

    def copy(self) -> "PropertyGraph":
        return induced_subgraph(self, self.nodes)

    def summary(self) -> dict[str, Any]:
        kinds: dict[str, int] = {}
        for n in self.nodes.values():
            kinds[n.kind.value] = kinds.get(n.kind.value, 0) + 1
        ekinds: dict[str, int] = {}
        for e in self.edges.values():
            name = e.label or e.kind.value
            ekinds[name] = ekinds.get(name, 0) + 1
        return {"nodes": len(self.nodes), "edges": len(self.edges),
                "node_kinds": kinds, "edge_kinds": ekinds}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PropertyGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def dumps(self) -> bytes:
        return dumps(self)


def induced_subgraph(g: PropertyGraph, nodes: Iterable[str],
                     edge_filter=None) -> PropertyGraph:
    """Subgraph holding exactly ``nodes`` and every edge of ``g`` between them.

    Node and edge ids are preserved.  ``edge_filter`` (Edge -> bool) can drop
    edges, e.g. computed layers.
    """
    keep = set(nodes)
    for n in keep:
        if n not in g.nodes:
            raise GraphError(f"unknown node {n!r}")
    sub = PropertyGraph()
    for nid, node in g.nodes.items():
        if nid in keep:
            sub.nodes[nid] = Node(nid, node.kind, dict(node.attrs))
            sub._adj[nid] = []
    for eid, e in g.edges.items():
        if e.tail in keep and e.head in keep and (edge_filter is None or edge_filter(e)):
            sub.edges[eid] = Edge(eid, e.tail, e.head, e.kind, e.label, e.key, dict(e.attrs))
            sub._by_identity[e.identity()] = eid
            sub._adj[e.tail].append(eid)
            if e.head != e.tail:
                sub._adj[e.head].append(eid)
    sub._next_node = g._next_node
    sub._next_edge = g._next_edge
    return sub


def base_edges_only(e: Edge) -> bool:
    return e.kind is not EdgeKind.COMPUTED


def connected_components(g: PropertyGraph) -> list[set[str]]:
    """Maximal sets of nodes reachable from each other ignoring direction.

    Components are listed in order of their first node's insertion.
    """
    seen: set[str] = set()
    out = []
    for start in g.nodes:
        if start in seen:
            continue
        comp = {start}
        seen.add(start)
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in g.neighbors(u):
                if v not in seen:
                    seen.add(v)
                    comp.add(v)
                    queue.append(v)
        out.append(comp)
    return out


def largest_component(g: PropertyGraph) -> PropertyGraph:
    comps = connected_components(g)
    if not comps:
        return PropertyGraph()
    best = max(comps, key=len)  # first wins on ties
    return induced_subgraph(g, best)


# snapshot format

def _encode_value(value: Any) -> Any:
    if isinstance(value, datetime):
        return {"$ts": value.timestamp()}
    return value


def _decode_value(value: Any) -> Any:
    if isinstance(value, dict):
        if set(value) != {"$ts"}:
            raise SnapshotError(f"unknown tagged value {value!r}")
        return utc(value["$ts"])
    return value


def _encode_attrs(attrs: dict[str, Any]) -> str:
    return json.dumps({k: _encode_value(v) for k, v in attrs.items()},
                      ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def _node_kind_token(node: Node) -> str:
    if node.kind is NodeKind.RESOURCE:
        return f"resource:{node.attrs['resource_type']}"
    return node.kind.value


def _edge_kind_token(edge: Edge) -> str:
    token = edge.kind.value
    if edge.label:
        token += f":{edge.label}"
    if edge.key:
        token += f"#{edge.key}"
    return token


def dumps(g: PropertyGraph) -> bytes:
    """Serialize to the line-delimited snapshot format."""
    lines = [SNAPSHOT_HEADER]
    for node in g.nodes.values():
        lines.append(f"N {node.id} {_node_kind_token(node)} {_encode_attrs(node.attrs)}")
    for e in g.edges.values():
        lines.append(f"E {e.id} {e.tail} {e.head} {_edge_kind_token(e)} {_encode_attrs(e.attrs)}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def loads(payload: bytes) -> PropertyGraph:
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SnapshotError(f"corrupt payload: {exc}") from None
    if not text.endswith("\n") and text:
        raise SnapshotError("corrupt payload: truncated final record")
    lines = text.split("\n")[:-1] if text else []
    if not lines:
        raise SnapshotError("corrupt payload: missing header")
    header = lines[0]
    if header != SNAPSHOT_HEADER:
        if header.startswith("sgscope-graph "):
            raise SnapshotError(f"version mismatch: {header!r}, expected {SNAPSHOT_HEADER!r}")
        raise SnapshotError("corrupt payload: bad header")
    g = PropertyGraph()
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            if line.startswith("N "):
                _, nid, kind_token, attrs = line.split(" ", 3)
                kind = NodeKind(kind_token.split(":", 1)[0])
                raw = json.loads(attrs)
                g.add_node(kind, {k: _decode_value(v) for k, v in raw.items()}, node_id=nid)
            elif line.startswith("E "):
                _, eid, tail, head, kind_token, attrs = line.split(" ", 5)
                kind_part, _, key = kind_token.partition("#")
                kind_name, _, label = kind_part.partition(":")
                raw = json.loads(attrs)
                e = _edge_direct(g, eid, tail, head, EdgeKind(kind_name), label, key,
                                 {k: _decode_value(v) for k, v in raw.items()})
            else:
                raise SnapshotError(f"unknown record type {line[:2]!r}")
        except SnapshotError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise SnapshotError(f"corrupt payload at line {lineno}: {exc}") from None
    return g


def _edge_direct(g: PropertyGraph, eid, tail, head, kind, label, key, attrs) -> str:
    # snapshot edges were validated on insertion; only structure is rechecked
    for end in (tail, head):
        if end not in g.nodes:
            raise SnapshotError(f"corrupt payload: edge {eid} has dangling endpoint {end}")
    if eid in g.edges:
        raise SnapshotError(f"corrupt payload: duplicate edge id {eid}")
    check_attrs(attrs)
    e = Edge(eid, tail, head, kind, label, key, attrs)
    g.edges[eid] = e
    g._by_identity[e.identity()] = eid
    g._adj[tail].append(eid)
    if head != tail:
        g._adj[head].append(eid)
    return eid


def save(g: PropertyGraph, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(g))


def load(path) -> PropertyGraph:
    with open(path, "rb") as fh:
        return loads(fh.read())


def to_dot(g: PropertyGraph, name: str = "G") -> str:
    """Graphviz DOT text for external rendering."""
    def q(s: str) -> str:
        return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'

    lines = [f"digraph {q(name)} {{"]
    for node in g.nodes.values():
        label = node.attrs.get("text") if node.kind is NodeKind.HASHTAG else node.id
        lines.append(f"  {q(node.id)} [kind={q(node.kind.value)}, label={q(str(label))}];")
    for e in g.edges.values():
        arrow = "" if e.directed else ", dir=none"
        lines.append(f"  {q(e.tail)} -> {q(e.head)} [kind={q(e.label or e.kind.value)}{arrow}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def post_date(g: PropertyGraph, post_id: str) -> date:
    return g.attr(post_id, "created_at").date()


def iter_posts(g: PropertyGraph) -> Iterator[str]:
    for n in g.nodes.values():
        if n.kind is NodeKind.POST:
            yield n.id
