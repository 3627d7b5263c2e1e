"""Interest queries: select the initial post set and narrow a background graph."""

from __future__ import annotations

import json
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from datetime import datetime
from itertools import combinations
from typing import Any

from .graph import EdgeKind, NodeKind, PropertyGraph, utc
from .ingest import build_background_graph, normalize_hashtag, tokenize


class QueryError(ValueError):
    pass


CONTENT_CLAUSES = ("any_k_terms", "fuzzy_terms", "profile_contains", "min_term_count", "hashtag_seeds")


@dataclass
class InterestQuery:
    """Conjunction of the clauses that are set.

    ``scope`` restricts evaluation to a fixed set of post node ids; it is
    not a content clause.
    """

    any_k_terms: tuple[list[str], int] | None = None
    fuzzy_terms: list[str] | None = None
    date_range: tuple[datetime, datetime] | None = None
    profile_contains: list[str] | None = None
    min_term_count: tuple[str, int] | None = None
    hashtag_seeds: tuple[list[str], int] | None = None
    scope: list[str] | None = None

    def __post_init__(self) -> None:
        if not any(getattr(self, c) is not None for c in CONTENT_CLAUSES):
            raise QueryError("query needs at least one content clause")
        if self.any_k_terms is not None:
            terms, k = self.any_k_terms
            if not terms or not isinstance(k, int) or k < 1 or k > len(terms):
                raise QueryError("any_k_terms: need 1 <= k <= number of terms")
            self.any_k_terms = (list(terms), k)
        if self.fuzzy_terms is not None and not self.fuzzy_terms:
            raise QueryError("fuzzy_terms: empty list")
        if self.date_range is not None:
            start, end = utc(self.date_range[0]), utc(self.date_range[1])
            if start > end:
                raise QueryError("date_range: start after end")
            self.date_range = (start, end)
        if self.profile_contains is not None and not self.profile_contains:
            raise QueryError("profile_contains: empty list")
        if self.min_term_count is not None:
            term, n = self.min_term_count
            if not term or not isinstance(n, int) or n < 1:
                raise QueryError("min_term_count: need a term and n >= 1")
        if self.hashtag_seeds is not None:
            tags, hops = self.hashtag_seeds
            if not tags or not isinstance(hops, int) or hops < 0:
                raise QueryError("hashtag_seeds: need tags and hops >= 0")
            self.hashtag_seeds = (list(tags), hops)

    @classmethod
    def from_json(cls, doc: dict[str, Any] | str) -> "InterestQuery":
        if isinstance(doc, str):
            doc = json.loads(doc)
        unknown = set(doc) - set(CONTENT_CLAUSES) - {"date_range", "scope"}
        if unknown:
            raise QueryError(f"unknown clauses: {sorted(unknown)}")
        kw: dict[str, Any] = {}
        try:
            if "any_k_terms" in doc:
                kw["any_k_terms"] = (doc["any_k_terms"]["terms"], doc["any_k_terms"].get("k", 1))
            if "fuzzy_terms" in doc:
                kw["fuzzy_terms"] = list(doc["fuzzy_terms"])
            if "date_range" in doc:
                kw["date_range"] = (doc["date_range"]["start"], doc["date_range"]["end"])
            if "profile_contains" in doc:
                kw["profile_contains"] = list(doc["profile_contains"])
            if "min_term_count" in doc:
                kw["min_term_count"] = (doc["min_term_count"]["term"], doc["min_term_count"]["n"])
            if "hashtag_seeds" in doc:
                kw["hashtag_seeds"] = (doc["hashtag_seeds"]["tags"], doc["hashtag_seeds"].get("hops", 0))
            if "scope" in doc:
                kw["scope"] = list(doc["scope"])
        except (KeyError, TypeError) as exc:
            raise QueryError(f"malformed clause: {exc}") from None
        return cls(**kw)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.any_k_terms is not None:
            out["any_k_terms"] = {"terms": self.any_k_terms[0], "k": self.any_k_terms[1]}
        if self.fuzzy_terms is not None:
            out["fuzzy_terms"] = self.fuzzy_terms
        if self.date_range is not None:
            out["date_range"] = {"start": self.date_range[0].isoformat(),
                                 "end": self.date_range[1].isoformat()}
        if self.profile_contains is not None:
            out["profile_contains"] = self.profile_contains
        if self.min_term_count is not None:
            out["min_term_count"] = {"term": self.min_term_count[0], "n": self.min_term_count[1]}
        if self.hashtag_seeds is not None:
            out["hashtag_seeds"] = {"tags": self.hashtag_seeds[0], "hops": self.hashtag_seeds[1]}
        if self.scope is not None:
            out["scope"] = self.scope
        return out


def within_one_edit(a: str, b: str) -> bool:
    """True when the Levenshtein distance between ``a`` and ``b`` is at most 1."""
    if a == b:
        return True
    la, lb = len(a), len(b)
    if abs(la - lb) > 1:
        return False
    if la > lb:
        a, b, la, lb = b, a, lb, la
    i = 0
    while i < la and a[i] == b[i]:
        i += 1
    if la == lb:
        return a[i + 1:] == b[i + 1:]
    return a[i:] == b[i + 1:]


def _contains_phrase(tokens: list[str], phrase: list[str]) -> bool:
    m = len(phrase)
    if m == 1:
        return phrase[0] in tokens
    return any(tokens[i:i + m] == phrase for i in range(len(tokens) - m + 1))


def _fuzzy_phrase(tokens: list[str], phrase: list[str]) -> bool:
    m = len(phrase)
    if m == 1:
        return any(within_one_edit(phrase[0], t) for t in tokens)
    target = " ".join(phrase)
    return any(within_one_edit(target, " ".join(tokens[i:i + m]))
               for i in range(len(tokens) - m + 1))


def _author(g: PropertyGraph, p: str) -> str | None:
    for e in g.in_edges(p, EdgeKind.WRITES):
        return e.tail
    return None


def hashtag_neighborhood(g: PropertyGraph, tags: list[str], hops: int) -> set[str]:
    """Hashtag node ids within ``hops`` co-occurrence steps of the seed tags."""
    adj: dict[str, set[str]] = defaultdict(set)
    for p in g.nodes_of(NodeKind.POST):
        hs = sorted({e.head for e in g.out_edges(p, EdgeKind.USES)})
        for a, b in combinations(hs, 2):
            adj[a].add(b)
            adj[b].add(a)
    wanted = {normalize_hashtag(t) for t in tags}
    seeds = [h for h in g.nodes_of(NodeKind.HASHTAG) if g.attr(h, "text") in wanted]
    reached = set(seeds)
    frontier = deque((s, 0) for s in seeds)
    while frontier:
        h, d = frontier.popleft()
        if d == hops:
            continue
        for nb in sorted(adj[h]):
            if nb not in reached:
                reached.add(nb)
                frontier.append((nb, d + 1))
    return reached


def evaluate_interest_query(g: PropertyGraph, q: InterestQuery) -> set[str]:
    """The posts of ``g`` satisfying every clause of ``q`` (the initial post set)."""
    posts = g.nodes_of(NodeKind.POST)
    if q.scope is not None:
        scope = set(q.scope)
        posts = [p for p in posts if p in scope]
    tokens = {p: tokenize(g.attr(p, "text", "")) for p in posts}
    keep = set(posts)

    if q.date_range is not None:
        start, end = q.date_range
        keep = {p for p in keep if start <= g.attr(p, "created_at") <= end}

    if q.any_k_terms is not None:
        terms, k = q.any_k_terms
        phrases = [tokenize(t) for t in terms]
        keep = {p for p in keep
                if sum(_contains_phrase(tokens[p], ph) for ph in phrases if ph) >= k}

    if q.fuzzy_terms is not None:
        phrases = [tokenize(t) for t in q.fuzzy_terms]
        keep = {p for p in keep if any(_fuzzy_phrase(tokens[p], ph) for ph in phrases if ph)}

    if q.profile_contains is not None:
        needles = [s.lower() for s in q.profile_contains]

        def profile_ok(p: str) -> bool:
            a = _author(g, p)
            prof = (g.attr(a, "profile", "") if a else "").lower()
            return any(s in prof for s in needles)

        keep = {p for p in keep if profile_ok(p)}

    if q.min_term_count is not None:
        term, n = q.min_term_count
        phrase = tokenize(term)
        per_author: Counter = Counter()
        for p in posts:
            if _contains_phrase(tokens[p], phrase):
                per_author[_author(g, p)] += 1
        authors = {a for a, c in per_author.items() if c >= n and a is not None}
        keep = {p for p in keep if _author(g, p) in authors}

    if q.hashtag_seeds is not None:
        tags, hops = q.hashtag_seeds
        reached = hashtag_neighborhood(g, tags, hops)
        keep = {p for p in keep
                if any(e.head in reached for e in g.out_edges(p, EdgeKind.USES))}
    return keep


def narrow(g0: PropertyGraph, q: InterestQuery | None) -> PropertyGraph:
    """Follow-up query on a background graph; ``None`` keeps ``g0`` as is."""
    if q is None:
        return g0
    return build_background_graph(g0, sorted(evaluate_interest_query(g0, q)))
