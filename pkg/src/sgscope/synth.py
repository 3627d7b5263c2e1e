"""Synthetic post corpora with planted groups and ground-truth labels."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any

import numpy as np

from .ingest import PostRecord

STRUCTURES = ("dense-core", "sparse-core-dense-periphery", "propagative-mention")
EPOCH = datetime(2021, 1, 1, tzinfo=timezone.utc)
DAY = 86400

FILLER_WORDS = [
    "people", "today", "news", "think", "really", "support", "time", "world", "need",
    "share", "great", "week", "state", "health", "plan", "watch", "vote", "local",
    "story", "update", "public", "policy", "big", "first", "right", "change", "city",
    "report", "live", "open", "work", "school", "money", "family", "data", "video",
]


class SynthError(ValueError):
    pass


@dataclass
class PlantedGroup:
    size: int
    topic_terms: list[str]
    structure: str
    day: int | None = None

    def __post_init__(self) -> None:
        if self.size < 10:
            raise SynthError("planted groups need at least 10 posts")
        if self.structure not in STRUCTURES:
            raise SynthError(f"unknown structure {self.structure!r}")


@dataclass
class SynthParams:
    n_background_posts: int = 2000
    planted_groups: list[PlantedGroup] = field(default_factory=list)
    seed: int = 0
    n_days: int = 7
    n_users: int = 600
    n_hashtags: int = 300
    zipf_exponent: float = 1.1
    mention_rate: float = 1.0
    mention_exponent: float = 1.0
    thread_rate: float = 0.1
    bridge_rate: float = 0.1
    common_term: str = "vaccine"

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "SynthParams":
        doc = dict(doc)
        doc["planted_groups"] = [PlantedGroup(**g) for g in doc.get("planted_groups", [])]
        return cls(**doc)

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class SyntheticCorpus:
    records: list[PostRecord]
    labels: dict[str, Any]

    def write(self, corpus_path, labels_path=None) -> None:
        corpus_path = Path(corpus_path)
        with open(corpus_path, "w", encoding="utf-8", newline="\n") as fh:
            for r in self.records:
                fh.write(r.to_json() + "\n")
        if labels_path is None:
            labels_path = corpus_path.with_suffix(".labels.json")
        with open(labels_path, "w", encoding="utf-8") as fh:
            json.dump(self.labels, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _ts(day: int, rng: np.random.Generator) -> datetime:
    return EPOCH + timedelta(seconds=int(day * DAY + rng.integers(0, DAY)))


def _text(rng: np.random.Generator, common: str, extra: list[str], n_words: int = 6) -> str:
    words = [common, *extra, *rng.choice(FILLER_WORDS, size=n_words).tolist()]
    rng.shuffle(words)
    return " ".join(words)


class _Mentions:
    """Preferential attachment over a fixed user pool."""

    def __init__(self, users: list[str], rng: np.random.Generator, exponent: float):
        self.users = users
        # prior popularity decays with rank; each mention adds one more unit
        self.weight = 20.0 / np.arange(1, len(users) + 1) ** exponent
        self.rng = rng

    def draw(self, k: int, exclude: str) -> list[str]:
        w = self.weight.copy()
        w[self.users.index(exclude)] = 0  # no self-mentions
        idx = self.rng.choice(len(self.users), size=k, replace=False, p=w / w.sum())
        self.weight[idx] += 1
        return [self.users[i] for i in idx]


def _background(p: SynthParams, rng: np.random.Generator) -> list[PostRecord]:
    users = [f"u{i}" for i in range(p.n_users)]
    author_w = 1.0 / np.arange(1, p.n_users + 1) ** 0.8
    author_w /= author_w.sum()
    tag_w = 1.0 / np.arange(1, p.n_hashtags + 1) ** p.zipf_exponent
    tag_w /= tag_w.sum()
    mentions = _Mentions(users, rng, p.mention_exponent)
    stamps = sorted(_ts(int(rng.integers(p.n_days)), rng) for _ in range(p.n_background_posts))
    out: list[PostRecord] = []
    for i, ts in enumerate(stamps):
        author = users[rng.choice(p.n_users, p=author_w)]
        n_tags = int(rng.integers(1, 4))
        tags = [f"tag{j}" for j in rng.choice(p.n_hashtags, size=n_tags, replace=False, p=tag_w)]
        k = min(int(rng.poisson(p.mention_rate)), 4)
        ment = mentions.draw(k, author) if k else []
        rec = PostRecord(
            post_id=f"b{i}", author_id=author, created_at=ts,
            text=_text(rng, p.common_term, []), author_profile=f"profile of {author}",
            hashtags=tags, mentions=ment,
            favorite_count=int(rng.poisson(3)), repost_count=int(rng.poisson(1)),
        )
        earlier = [r for r in out[-50:] if r.created_at < ts]
        if earlier and rng.random() < p.thread_rate:
            parent = earlier[int(rng.integers(len(earlier)))]
            if rng.random() < 0.5:
                rec.reply_to_id = parent.post_id
            else:
                rec.repost_of_id = parent.post_id
        out.append(rec)
    return out


def _sorted_day(n: int, day: int, rng: np.random.Generator) -> list[datetime]:
    return sorted(_ts(day, rng) for _ in range(n))


def _dense_core(gi: int, g: PlantedGroup, sig: str, p: SynthParams, rng) -> tuple[list[PostRecord], dict]:
    pool = [f"g{gi}core{k}" for k in range(8)]
    authors = [f"g{gi}a{k}" for k in range(max(5, g.size // 3))]
    recs = []
    for j, ts in enumerate(_sorted_day(g.size, g.day, rng)):
        tags = [sig, *rng.choice(pool, size=3, replace=False).tolist()]
        recs.append(PostRecord(
            post_id=f"g{gi}p{j}", author_id=authors[int(rng.integers(len(authors)))],
            created_at=ts, text=_text(rng, p.common_term, g.topic_terms), hashtags=tags,
            favorite_count=int(rng.poisson(3))))
    return recs, {"core_hashtags": [sig, *pool], "periphery_hashtags": []}


def _circulant_edges(labels: list[str]) -> list[tuple[str, str]]:
    m = len(labels)
    return [(labels[i], labels[(i + d) % m]) for i in range(m) for d in (1, 2)]


def _sparse_core(gi: int, g: PlantedGroup, sig: str, p: SynthParams, rng) -> tuple[list[PostRecord], dict]:
    # core: a 4-regular pattern over many hashtags, one pair per post
    m = max(6, (g.size * 4) // 15)
    core = [f"g{gi}c{k}" for k in rng.permutation(m)]
    pairs = _circulant_edges(core)
    rng.shuffle(pairs)
    n_core = min(len(pairs), g.size - 8)
    # periphery: a few small cliques, each post carrying a whole clique
    cliques = [[f"g{gi}q{c}_{k}" for k in range(4)] for c in range(3)]
    authors = [f"g{gi}a{k}" for k in range(max(5, g.size // 3))]
    tag_lists = [[sig, a, b] for a, b in pairs[:n_core]]
    tag_lists += [[sig, *cliques[k % 3]] for k in range(g.size - n_core)]
    rng.shuffle(tag_lists)
    recs = []
    for j, ts in enumerate(_sorted_day(g.size, g.day, rng)):
        recs.append(PostRecord(
            post_id=f"g{gi}p{j}", author_id=authors[int(rng.integers(len(authors)))],
            created_at=ts, text=_text(rng, p.common_term, g.topic_terms), hashtags=tag_lists[j],
            favorite_count=int(rng.poisson(3))))
    return recs, {"core_hashtags": sorted({sig, *core}),
                  "periphery_hashtags": [t for c in cliques for t in c]}


def _propagative(gi: int, g: PlantedGroup, sig: str, p: SynthParams, rng) -> tuple[list[PostRecord], dict]:
    # hubs are the most-mentioned background accounts; the rest is the group's own audience
    hubs = [f"u{k}" for k in range(6)]
    audience = hubs + [f"g{gi}m{k}" for k in range(54)]
    w = np.ones(len(audience))
    w[:6] = 8.0
    w /= w.sum()
    authors = [f"g{gi}a{k}" for k in range(max(5, g.size // 5))]
    recs: list[PostRecord] = []
    for j, ts in enumerate(_sorted_day(g.size, g.day, rng)):
        author = authors[int(rng.integers(len(authors)))]
        earlier = [r for r in recs if r.created_at < ts]
        if earlier and rng.random() < 0.4:
            # cascade: repost an earlier group post, keeping its content
            parent = earlier[int(rng.integers(len(earlier)))]
            recs.append(PostRecord(
                post_id=f"g{gi}p{j}", author_id=author, created_at=ts, text=parent.text,
                hashtags=list(parent.hashtags), mentions=list(parent.mentions),
                repost_of_id=parent.post_id))
            parent.repost_count += 1
            continue
        k = int(rng.integers(3, 7))
        ment = rng.choice(audience, size=k, replace=False, p=w).tolist()
        recs.append(PostRecord(
            post_id=f"g{gi}p{j}", author_id=author, created_at=ts,
            text=_text(rng, p.common_term, g.topic_terms),
            hashtags=[sig], mentions=ment,
            favorite_count=int(rng.poisson(5))))
    return recs, {"core_hashtags": [sig], "periphery_hashtags": [],
                  "audience": audience, "hubs": hubs}


def _bridge_posts(gi: int, g: PlantedGroup, tags: list[str], p: SynthParams,
                  rng) -> list[PostRecord]:
    """Background posts on other days pairing a group tag with a popular tag.

    They tie the group's hashtags into the background network, as topic
    leakage would in real data, without touching the group's own posts.
    """
    tag_w = 1.0 / np.arange(1, p.n_hashtags + 1) ** p.zipf_exponent
    tag_w /= tag_w.sum()
    other_days = [d for d in range(p.n_days) if d != g.day] or [g.day]
    out = []
    for j in range(int(round(p.bridge_rate * g.size))):
        day = other_days[int(rng.integers(len(other_days)))]
        out.append(PostRecord(
            post_id=f"g{gi}x{j}", author_id=f"u{int(rng.integers(p.n_users))}",
            created_at=_ts(day, rng), text=_text(rng, p.common_term, []),
            hashtags=[tags[int(rng.integers(len(tags)))],
                      f"tag{int(rng.choice(p.n_hashtags, p=tag_w))}"]))
    return out


BUILDERS = {"dense-core": _dense_core, "sparse-core-dense-periphery": _sparse_core,
            "propagative-mention": _propagative}


def generate_synthetic_corpus(params: SynthParams | dict[str, Any]) -> SyntheticCorpus:
    """Background posts plus each planted group; labels give every group's posts."""
    p = params if isinstance(params, SynthParams) else SynthParams.from_json(params)
    rng = np.random.default_rng(p.seed)
    records = _background(p, rng)
    groups = []
    for gi, g in enumerate(p.planted_groups):
        if g.day is None:
            g = PlantedGroup(g.size, g.topic_terms, g.structure, day=(2 + gi) % p.n_days)
        sig = f"planted{gi}"
        recs, extra = BUILDERS[g.structure](gi, g, sig, p, rng)
        records.extend(recs)
        bridge_tags = [t for t in extra["core_hashtags"] if t != sig] or [sig]
        records.extend(_bridge_posts(gi, g, bridge_tags, p, rng))
        groups.append({"index": gi, "structure": g.structure, "day": g.day,
                       "signature_hashtag": sig, "topic_terms": g.topic_terms,
                       "post_ids": [r.post_id for r in recs], **extra})
    records.sort(key=lambda r: (r.created_at, r.post_id))
    labels = {"seed": p.seed, "params": p.to_json(), "groups": groups,
              "day_zero": EPOCH.strftime("%Y-%m-%d")}
    return SyntheticCorpus(records, labels)
