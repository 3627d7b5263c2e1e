"""Post records to a heterogeneous graph, plus the derived layers built on it."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field, asdict
from datetime import datetime
from itertools import combinations
from typing import Any, Iterable

from .graph import (
    COMENTION, HC, POST_POST_EDGES, UMUHD, EdgeKind, GraphError, NodeKind,
    PropertyGraph, base_edges_only, induced_subgraph, utc,
)

log = logging.getLogger(__name__)

TOKEN_RE = re.compile(r"\w+", re.UNICODE)

REQUIRED_FIELDS = ("post_id", "author_id", "created_at")


class RecordError(ValueError):
    """A post record failed validation; ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; punctuation and whitespace separate tokens."""
    return [t for t in TOKEN_RE.findall(text.lower()) if t.strip("_")]


def normalize_hashtag(tag: str) -> str:
    return tag.strip().lstrip("#").lower()


def _dedupe(values: Iterable[str]) -> list[str]:
    return list(dict.fromkeys(v for v in values if v))


@dataclass
class PostRecord:
    post_id: str
    author_id: str
    created_at: datetime
    text: str = ""
    author_profile: str = ""
    hashtags: list[str] = field(default_factory=list)
    mentions: list[str] = field(default_factory=list)
    urls: list[str] = field(default_factory=list)
    reply_to_id: str | None = None
    repost_of_id: str | None = None
    favorite_count: int = 0
    repost_count: int = 0

    def to_json(self) -> str:
        d = asdict(self)
        d["created_at"] = self.created_at.strftime("%Y-%m-%dT%H:%M:%SZ")
        return json.dumps(d, ensure_ascii=False, sort_keys=True)


def _text_list(obj: dict, name: str) -> list[str]:
    value = obj.get(name) or []
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise RecordError(name, "expected a list of strings")
    return value


def _count(obj: dict, name: str) -> int:
    value = obj.get(name, 0) or 0
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise RecordError(name, f"expected a non-negative integer, got {value!r}")
    return value


def record_from_dict(obj: dict[str, Any]) -> PostRecord:
    for name in REQUIRED_FIELDS:
        value = obj.get(name)
        if value is None or (isinstance(value, str) and not value.strip()):
            raise RecordError(name, "missing required field")
    try:
        created = utc(obj["created_at"]) if not isinstance(obj["created_at"], (int, float)) \
            else utc(float(obj["created_at"]))
    except (ValueError, TypeError, OverflowError):
        raise RecordError("created_at", f"malformed timestamp {obj['created_at']!r}") from None
    if created.timestamp() < 0:
        raise RecordError("created_at", "timestamp before epoch")
    text = obj.get("text") or ""
    if not isinstance(text, str):
        raise RecordError("text", "expected a string")
    optional = {}
    for name in ("reply_to_id", "repost_of_id"):
        value = obj.get(name)
        if value is not None and not isinstance(value, str):
            value = str(value)
        optional[name] = value or None
    return PostRecord(
        post_id=str(obj["post_id"]),
        author_id=str(obj["author_id"]),
        created_at=created,
        text=text,
        author_profile=str(obj.get("author_profile") or ""),
        hashtags=_dedupe(normalize_hashtag(h) for h in _text_list(obj, "hashtags")),
        mentions=_dedupe(m.strip().lstrip("@") for m in _text_list(obj, "mentions")),
        urls=_dedupe(u.strip() for u in _text_list(obj, "urls")),
        favorite_count=_count(obj, "favorite_count"),
        repost_count=_count(obj, "repost_count"),
        **optional,
    )


def parse_post_record(line: bytes | str) -> PostRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordError("record", f"not a JSON object ({exc})") from None
    if not isinstance(obj, dict):
        raise RecordError("record", "not a JSON object")
    return record_from_dict(obj)


def read_records(path) -> list[PostRecord]:
    records = []
    with open(path, "rb") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(parse_post_record(line))
            except RecordError as exc:
                raise RecordError(exc.field, f"line {lineno}: {exc}") from None
    return records


def from_twitter_v1(tweet: dict[str, Any]) -> PostRecord:
    """Convert a Twitter v1.1 status object."""
    entities = tweet.get("entities") or {}
    created = datetime.strptime(tweet["created_at"], "%a %b %d %H:%M:%S %z %Y")
    retweeted = tweet.get("retweeted_status")
    user = tweet.get("user") or {}
    return record_from_dict({
        "post_id": tweet.get("id_str") or str(tweet["id"]),
        "author_id": user.get("id_str") or str(user.get("id", "")),
        "author_profile": user.get("description") or "",
        "created_at": created.isoformat(),
        "text": tweet.get("full_text") or tweet.get("text") or "",
        "hashtags": [h["text"] for h in entities.get("hashtags", [])],
        "mentions": [m.get("id_str") or str(m["id"]) for m in entities.get("user_mentions", [])],
        "urls": [u.get("expanded_url") or u["url"] for u in entities.get("urls", [])],
        "reply_to_id": tweet.get("in_reply_to_status_id_str"),
        "repost_of_id": retweeted.get("id_str") if retweeted else None,
        "favorite_count": tweet.get("favorite_count", 0),
        "repost_count": tweet.get("retweet_count", 0),
    })


# node ids are namespaced by kind so keys never collide

def user_id(key: str) -> str:
    return "u:" + key


def post_id(key: str) -> str:
    return "p:" + key


def hashtag_id(text: str) -> str:
    return "h:" + text


def term_id(token: str) -> str:
    return "t:" + token


def resource_id(url: str) -> str:
    return "r:" + url


_IMAGE_EXT = (".jpg", ".jpeg", ".png", ".gif", ".webp")
_VIDEO_HOSTS = ("youtube.com", "youtu.be", "vimeo.com", "tiktok.com")


def resource_type(url: str) -> str:
    low = url.lower().split("?", 1)[0]
    if low.endswith(_IMAGE_EXT):
        return "image"
    if low.endswith((".mp4", ".mov", ".webm")) or any(h in low for h in _VIDEO_HOSTS):
        return "video"
    return "website"


@dataclass
class IngestReport:
    posts: int = 0
    duplicates: list[str] = field(default_factory=list)
    dangling: list[tuple[str, str, str]] = field(default_factory=list)
    order_violations: list[tuple[str, str, str]] = field(default_factory=list)


def _ensure(g: PropertyGraph, node_id: str, kind: NodeKind, attrs: dict) -> str:
    if node_id not in g.nodes:
        g.add_node(kind, attrs, node_id=node_id)
    return node_id


def _clean_id(raw: str) -> str:
    return re.sub(r"\s+", "_", raw.strip())


def build_base_graph(records: Iterable[PostRecord],
                     report: IngestReport | None = None) -> PropertyGraph:
    """One Post node per record and the base edge layers between entities.

    Reply/repost references to posts outside the corpus are logged and
    recorded in ``report.dangling`` rather than materialized.
    """
    report = report if report is not None else IngestReport()
    g = PropertyGraph()
    records = list(records)
    pending = []
    for rec in records:
        pid = post_id(_clean_id(rec.post_id))
        if pid in g.nodes:
            report.duplicates.append(rec.post_id)
            log.warning("duplicate post id %s skipped", rec.post_id)
            continue
        g.add_node(NodeKind.POST, {
            "post_id": rec.post_id,
            "created_at": rec.created_at,
            "text": rec.text,
            "hashtags": rec.hashtags,
            "favorite_count": rec.favorite_count,
            "repost_count": rec.repost_count,
        }, node_id=pid)
        report.posts += 1
        author = _ensure(g, user_id(_clean_id(rec.author_id)), NodeKind.USER,
                         {"user_id": rec.author_id})
        if rec.author_profile:
            g.nodes[author].attrs["profile"] = rec.author_profile
        g.add_edge(author, pid, EdgeKind.WRITES)
        for tag in rec.hashtags:
            h = _ensure(g, hashtag_id(_clean_id(tag)), NodeKind.HASHTAG, {"text": tag})
            g.add_edge(pid, h, EdgeKind.USES)
        for m in rec.mentions:
            u = _ensure(g, user_id(_clean_id(m)), NodeKind.USER, {"user_id": m})
            g.add_edge(pid, u, EdgeKind.MENTIONS)
        for url in rec.urls:
            r = _ensure(g, resource_id(_clean_id(url)), NodeKind.RESOURCE,
                        {"url": url, "resource_type": resource_type(url)})
            g.add_edge(pid, r, EdgeKind.LINKS)
        for token, n in Counter(tokenize(rec.text)).items():
            t = _ensure(g, term_id(token), NodeKind.TERM, {"text": token})
            g.add_edge(pid, t, EdgeKind.CONTAINS, {"count": n})
        if rec.reply_to_id:
            pending.append((pid, rec.reply_to_id, EdgeKind.REPLY_TO))
        if rec.repost_of_id:
            pending.append((pid, rec.repost_of_id, EdgeKind.REPOST_OF))
    for pid, target, kind in pending:
        tid = post_id(_clean_id(target))
        if tid not in g.nodes:
            report.dangling.append((g.attr(pid, "post_id"), target, kind.value))
            log.info("dangling %s reference %s -> %s", kind.value, pid, target)
            continue
        try:
            g.add_edge(pid, tid, kind)
        except GraphError as exc:
            report.order_violations.append((g.attr(pid, "post_id"), target, kind.value))
            log.warning("skipped %s: %s", kind.value, exc)
    return g


# semantic neighborhoods and conversations

def _require_post(g: PropertyGraph, p: str) -> None:
    if g.kind(p) is not NodeKind.POST:
        raise GraphError(f"{p!r} is not a post")


def semantic_neighborhood_nodes(g: PropertyGraph, p: str) -> set[str]:
    _require_post(g, p)
    out = {p}
    for e in g.incident(p):
        if e.kind is EdgeKind.COMPUTED:
            continue
        out.add(e.head if e.tail == p else e.tail)
    return out


def semantic_neighborhood(g: PropertyGraph, p: str) -> PropertyGraph:
    """The star of ``p``: the post, its directly related nodes and those edges."""
    nodes = semantic_neighborhood_nodes(g, p)
    star = set(e.id for e in g.incident(p) if e.kind is not EdgeKind.COMPUTED)
    return induced_subgraph(g, nodes, edge_filter=lambda e: e.id in star)


@dataclass
class ConversationContext:
    seed_post: str
    members: set[str]
    graph: PropertyGraph
    thread: set[str] = field(default_factory=set)


def thread_posts(g: PropertyGraph, p: str) -> set[str]:
    """Posts reachable to or from ``p`` over reply and repost edges."""
    _require_post(g, p)
    seen = {p}
    queue = deque([p])
    while queue:
        u = queue.popleft()
        for v in g.neighbors(u, POST_POST_EDGES):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def conversation_context(g: PropertyGraph, p: str) -> ConversationContext:
    thread = thread_posts(g, p)
    members: set[str] = set()
    for q in thread:
        members |= semantic_neighborhood_nodes(g, q)
    graph = induced_subgraph(g, members, edge_filter=base_edges_only)
    return ConversationContext(p, members, graph, thread)


def context_nodes(g: PropertyGraph, posts: Iterable[str]) -> set[str]:
    """Union of conversation-context node sets, sharing thread traversals."""
    done: set[str] = set()
    nodes: set[str] = set()
    for p in posts:
        if p in done:
            continue
        thread = thread_posts(g, p)
        done |= thread
        for q in thread:
            nodes |= semantic_neighborhood_nodes(g, q)
    return nodes


def build_background_graph(g: PropertyGraph, p0: Iterable[str],
                           computed: bool = True) -> PropertyGraph:
    """Merge the conversation contexts of ``p0`` and add computed layers."""
    p0 = list(dict.fromkeys(p0))
    if not p0:
        raise GraphError("empty universe of discourse")
    for p in p0:
        _require_post(g, p)
    g0 = induced_subgraph(g, context_nodes(g, p0), edge_filter=base_edges_only)
    if computed:
        add_computed_layers(g0)
    return g0


# computed edges

@dataclass(frozen=True)
class ComputedEdge:
    type_name: str
    tail: str
    head: str
    properties: tuple = ()

    @property
    def props(self) -> dict[str, Any]:
        return dict(self.properties)


def _posts(g: PropertyGraph, posts: Iterable[str] | None) -> list[str]:
    if posts is None:
        return g.nodes_of(NodeKind.POST)
    return list(posts)


def _pair_counts(g: PropertyGraph, posts, kind: EdgeKind) -> Counter:
    counts: Counter = Counter()
    for p in posts:
        _require_post(g, p)
        targets = sorted({e.head for e in g.out_edges(p, kind)})
        for a, b in combinations(targets, 2):
            counts[(a, b)] += 1
    return counts


def raw_self_pairs(records: Iterable[PostRecord]) -> int:
    """Self-pairs a naive join over raw (post, hashtag) rows would produce."""
    n = 0
    for rec in records:
        tags = [normalize_hashtag(h) for h in rec.hashtags]
        n += sum(c - 1 for c in Counter(tags).values() if c > 1)
    return n


def build_hashtag_cooccurrence(g: PropertyGraph, posts: Iterable[str] | None = None) -> set[ComputedEdge]:
    return {ComputedEdge(HC, a, b, (("count", c),))
            for (a, b), c in _pair_counts(g, _posts(g, posts), EdgeKind.USES).items()}


def build_user_comention(g: PropertyGraph, posts: Iterable[str] | None = None) -> set[ComputedEdge]:
    return {ComputedEdge(COMENTION, a, b, (("count", c),))
            for (a, b), c in _pair_counts(g, _posts(g, posts), EdgeKind.MENTIONS).items()}


def build_umuhd(g: PropertyGraph, posts: Iterable[str] | None = None) -> set[ComputedEdge]:
    groups: Counter = Counter()
    for p in _posts(g, posts):
        _require_post(g, p)
        day = g.attr(p, "created_at").date().isoformat()
        authors = [e.tail for e in g.in_edges(p, EdgeKind.WRITES)]
        mentioned = sorted({e.head for e in g.out_edges(p, EdgeKind.MENTIONS)})
        tags = sorted({g.attr(e.head, "text") for e in g.out_edges(p, EdgeKind.USES)})
        for u1 in authors:
            for u2 in mentioned:
                for h in tags:
                    groups[(u1, u2, day, h)] += 1
    return {ComputedEdge(UMUHD, u1, u2, (("day", d), ("hashtag", h), ("mCount", c)))
            for (u1, u2, d, h), c in groups.items()}


def add_computed_edges(g: PropertyGraph, edges: Iterable[ComputedEdge]) -> None:
    for ce in sorted(edges, key=lambda c: (c.type_name, c.tail, c.head, c.properties)):
        props = ce.props
        key = ""
        if ce.type_name == UMUHD:
            key = f"{props['day']}/{props['hashtag']}"
        g.add_edge(ce.tail, ce.head, EdgeKind.COMPUTED, props, label=ce.type_name, key=key)


def add_computed_layers(g: PropertyGraph, umuhd: bool = True) -> PropertyGraph:
    """Materialize HC, co-mention (and UMUHD) over all posts of ``g``."""
    posts = g.nodes_of(NodeKind.POST)
    add_computed_edges(g, build_hashtag_cooccurrence(g, posts))
    add_computed_edges(g, build_user_comention(g, posts))
    if umuhd:
        add_computed_edges(g, build_umuhd(g, posts))
    return g


def network_view(g: PropertyGraph, view: str) -> PropertyGraph:
    """Homogeneous graph used for structural metrics.

    ``hashtag``: hashtags used by posts of ``g`` joined by co-occurrence
    counts recomputed from those posts.  ``comention``: mentioned users
    joined when a post mentions both.  ``full``: every node except terms
    with base edges only.
    """
    if view == "full":
        keep = [n for n, node in g.nodes.items() if node.kind is not NodeKind.TERM]
        return induced_subgraph(g, keep, edge_filter=base_edges_only)
    if view == "hashtag":
        kind, builder = EdgeKind.USES, build_hashtag_cooccurrence
    elif view == "comention":
        kind, builder = EdgeKind.MENTIONS, build_user_comention
    else:
        raise ValueError(f"unknown network view {view!r}")
    posts = g.nodes_of(NodeKind.POST)
    if not posts:
        # already a view: keep the computed layer it carries
        node_kind = NodeKind.HASHTAG if view == "hashtag" else NodeKind.USER
        label = HC if view == "hashtag" else COMENTION
        return induced_subgraph(g, g.nodes_of(node_kind), edge_filter=lambda e: e.label == label)
    members = sorted({e.head for p in posts for e in g.out_edges(p, kind)})
    out = induced_subgraph(g, members, edge_filter=lambda e: False)
    add_computed_edges(out, builder(g, posts))
    return out
