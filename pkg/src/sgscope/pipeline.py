"""End-to-end run: every stage reads and writes files so it can be rerun alone."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import re
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import graph as gmod
from .construct import CandidateFilter, CandidateSubgraph, construct, filter_candidates
from .graph import PropertyGraph, largest_component
from .grouping import (
    NodeGroup, auto_generate_grouping, group_nodes, spec_from_json,
)
from .ingest import IngestReport, build_background_graph, build_base_graph, network_view, read_records
from .interestingness import DEFAULT_BINS, discover, divergence_set, reference_bundle
from .metrics import MetricBundle, MetricError, compute_metrics
from .query import InterestQuery, evaluate_interest_query, narrow
from .validate import ValidationError, compare_to_baseline, stands_out_low

log = logging.getLogger(__name__)

VIEWS = ("hashtag", "comention")
STAGES = ("ingest", "query", "group", "construct", "metrics", "discover", "validate")


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    corpus: str
    query: dict[str, Any]
    out_dir: str
    followup_query: dict[str, Any] | None = None
    grouping: dict[str, Any] | str = "auto"
    rule: str = "g1"
    filter: dict[str, Any] = field(default_factory=dict)
    views: list[str] = field(default_factory=lambda: list(VIEWS))
    n_bins: int = DEFAULT_BINS
    k: int = 5
    seed: int = 0
    edge_metric: str = "shortest_path"
    mode: str = "prose"
    background_samples: int = 10
    background_target: int = 500
    validate_view: str = "hashtag"
    validate_samples: int = 10

    @classmethod
    def from_json(cls, doc: dict[str, Any] | str, base_dir: str | Path | None = None) -> "PipelineConfig":
        if isinstance(doc, (str, Path)):
            path = Path(doc)
            base_dir = path.parent
            doc = json.loads(path.read_text())
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**doc)
        if base_dir is not None:
            for name in ("corpus", "out_dir"):
                p = Path(getattr(cfg, name))
                if not p.is_absolute():
                    setattr(cfg, name, str(Path(base_dir) / p))
        return cfg

    def check(self) -> None:
        if not Path(self.corpus).is_file():
            raise ConfigError(f"corpus not found: {self.corpus}")
        for v in self.views:
            if v not in VIEWS:
                raise ConfigError(f"unknown view {v!r}")
        if self.validate_view not in VIEWS:
            raise ConfigError(f"unknown view {self.validate_view!r}")
        if self.mode not in ("prose", "literal"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        InterestQuery.from_json(self.query)
        CandidateFilter.from_json(self.filter)

    def to_json(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# file helpers

def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path: Path, doc: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_finite(doc), indent=1, sort_keys=True) + "\n")
    return path


def read_json(path) -> Any:
    return json.loads(Path(path).read_text())


def _finite(x: Any) -> Any:
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def safe_name(i: int, cid: str) -> str:
    return f"{i:04d}_" + re.sub(r"[^A-Za-z0-9._-]+", "_", cid)[:80]


def histograms_csv(hists: dict[str, tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "bin", "left", "right", "reference_count", "candidate_count"])
    for metric, (ref, cand) in hists.items():
        for b in range(len(ref.counts)):
            w.writerow([metric, b, repr(ref.bin_edges[b]), repr(ref.bin_edges[b + 1]),
                        ref.counts[b], cand.counts[b]])
    return buf.getvalue()


# stages

def stage_ingest(corpus: Path, out: Path, seed: int = 0) -> list[Path]:
    report = IngestReport()
    g = build_base_graph(read_records(corpus), report)
    out.mkdir(parents=True, exist_ok=True)
    gmod.save(g, out / "base.graph")
    write_json(out / "ingest_report.json", {"seed": seed, "summary": g.summary(), **asdict(report)})
    return [out / "base.graph", out / "ingest_report.json"]


def stage_query(base: PropertyGraph, query: dict, followup: dict | None, out: Path,
                seed: int = 0) -> list[Path]:
    q0 = InterestQuery.from_json(query)
    p0 = sorted(evaluate_interest_query(base, q0))
    g0 = build_background_graph(base, p0)
    gprime = narrow(g0, InterestQuery.from_json(followup) if followup else None)
    gmod.save(gprime, out / "gprime.graph")
    write_json(out / "query.json", {"seed": seed, "query": q0.to_json(), "followup": followup,
                                    "p0": p0, "g0": g0.summary(), "gprime": gprime.summary()})
    return [out / "gprime.graph", out / "query.json"]


def stage_group(gprime: PropertyGraph, grouping: dict | str, out: Path, seed: int = 0) -> list[Path]:
    if grouping == "auto":
        spec = auto_generate_grouping(gprime, "attributes")
    elif isinstance(grouping, str) and grouping.startswith("auto:"):
        spec = auto_generate_grouping(gprime, grouping.split(":", 1)[1])
    else:
        spec = spec_from_json(grouping)
    groups = group_nodes(gprime, spec)
    path = write_json(out / "groups.json", {"seed": seed, "spec": spec.to_json(),
                                              "groups": [g.to_json() for g in groups]})
    return [path]


def load_groups(path) -> list[NodeGroup]:
    return [NodeGroup.from_json(d) for d in read_json(path)["groups"]]


def stage_construct(gprime: PropertyGraph, groups: list[NodeGroup], rule: str,
                    filt: CandidateFilter, out: Path, seed: int = 0) -> list[Path]:
    cands = construct(gprime, groups, rule)
    kept, rejected = filter_candidates(cands, filt)
    cdir = out / "candidates"
    cdir.mkdir(parents=True, exist_ok=True)
    entries = []
    paths = []
    for i, c in enumerate(kept):
        name = safe_name(i, c.id)
        gmod.save(c.graph, cdir / f"{name}.graph")
        paths.append(cdir / f"{name}.graph")
        entries.append({**c.manifest(), "file": f"{name}.graph",
                        "group_posts": sorted(c.group_posts)})
    doc = {"seed": seed, "rule": rule, "filter": filt.to_json(), "kept": entries,
           "rejected": [c.manifest() for c in rejected]}
    return [write_json(out / "candidates.json", doc), *paths]


def load_candidates(out: Path) -> list[CandidateSubgraph]:
    doc = read_json(out / "candidates.json")
    cdir = out / "candidates"
    return [CandidateSubgraph(e["id"], tuple(e["key"]), e["rule"], gmod.load(cdir / e["file"]),
                              frozenset(e.get("group_posts", [])))
            for e in doc["kept"]]


def view_component(g: PropertyGraph, view: str, min_nodes: int) -> PropertyGraph | None:
    """Largest component of a network view, or None below the size threshold."""
    v = network_view(g, view)
    if not v.nodes:
        return None
    lc = largest_component(v)
    return lc if len(lc) >= min_nodes else None


def stage_metrics(gprime: PropertyGraph, cands: list[CandidateSubgraph], views: list[str],
                  min_nodes: int, seed: int, edge_metric: str, n_samples: int, target: int,
                  out: Path) -> list[Path]:
    paths = []
    for view in views:
        bg = network_view(gprime, view)
        bundles = {}
        for c in cands:
            lc = view_component(c.graph, view, min_nodes)
            if lc is None:
                continue
            b = compute_metrics(lc, edge_metric=edge_metric)
            b.meta["candidate_id"] = c.id
            bundles[c.id] = b
        target_size = max([target] + [b.meta["nodes"] for b in bundles.values()])
        if not bg.nodes or not bg.edges:
            raise MetricError(f"{view} view of the background graph has no edges")
        ref = reference_bundle(bg, target_size, n_samples, seed, edge_metric)
        ref.meta.update({"view": view, "seed": seed})
        paths.append(write_json(out / "metrics" / view / "reference.json", ref.to_json()))
        paths.append(write_json(out / "metrics" / view / "candidates.json",
                                {"seed": seed, "view": view,
                                 "bundles": {k: b.to_json() for k, b in bundles.items()}}))
    return paths


def load_bundles(out: Path, view: str) -> tuple[MetricBundle, dict[str, MetricBundle]]:
    ref = MetricBundle.from_json(read_json(out / "metrics" / view / "reference.json"))
    doc = read_json(out / "metrics" / view / "candidates.json")
    return ref, {k: MetricBundle.from_json(v) for k, v in doc["bundles"].items()}


def run_discovery(reference: MetricBundle, bundles: dict[str, MetricBundle], n_bins: int,
                  k: int, mode: str, reference_id: str = "reference"):
    sets, hists = [], {}
    for cid in sorted(bundles):
        ds, h = divergence_set(bundles[cid], reference, n_bins, cid, reference_id)
        sets.append(ds)
        hists[cid] = h
    if len(sets) < 2:
        return None, sets, hists
    return discover(sets, k, mode), sets, hists


def stage_discover(views: list[str], n_bins: int, k: int, mode: str, seed: int,
                   out: Path) -> list[Path]:
    paths = []
    for view in views:
        ref, bundles = load_bundles(out, view)
        result, sets, hists = run_discovery(ref, bundles, n_bins, k, mode, f"{view}:reference")
        doc = {"view": view, "seed": seed, "n_bins": n_bins, "k": k, "mode": mode,
               "result": result.to_json() if result else None,
               "divergence_sets": [s.to_json() for s in sets]}
        paths.append(write_json(out / "discover" / f"{view}.json", doc))
        hdir = out / "discover" / view
        hdir.mkdir(parents=True, exist_ok=True)
        for i, cid in enumerate(sorted(hists)):
            p = hdir / f"{safe_name(i, cid)}.csv"
            p.write_text(histograms_csv(hists[cid]))
            paths.append(p)
    return paths


def stage_validate(gprime: PropertyGraph, cands: list[CandidateSubgraph], view: str,
                   min_nodes: int, n_samples: int, seed: int, out: Path) -> list[Path]:
    bg = network_view(gprime, view)
    profiles = {}
    for c in cands:
        lc = view_component(c.graph, view, max(min_nodes, 3))
        if lc is None:
            continue
        try:
            prof = compare_to_baseline(lc, bg, n_samples, seed)
        except ValidationError as exc:
            profiles[c.id] = {"error": str(exc)}
            continue
        profiles[c.id] = {**prof.to_json(), "below_baseline": stands_out_low(prof)}
    return [write_json(out / "validate.json", {"view": view, "seed": seed,
                                               "n_samples": n_samples, "profiles": profiles})]


# orchestration

def _rel(p: Path, root: Path) -> str:
    try:
        return str(p.relative_to(root))
    except ValueError:
        return p.name


def _timed(stage: str, manifest: list, root: Path, inputs: list[Path],
           fn: Callable[[], list[Path]]) -> list[Path]:
    t0 = time.perf_counter()
    try:
        outputs = fn()
    except Exception as exc:  # noqa: BLE001 - reported with the stage name
        raise PipelineError(stage, exc) from exc
    manifest.append({
        "stage": stage,
        "inputs": {_rel(p, root): sha256(p) for p in inputs},
        "outputs": {_rel(p, root): sha256(p) for p in outputs},
        "wall_time_s": round(time.perf_counter() - t0, 4),
    })
    return outputs


def run_pipeline(config: PipelineConfig) -> dict[str, Any]:
    """Run all stages into ``config.out_dir`` and write ``manifest.json``."""
    config.check()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", config.to_json())
    filt = CandidateFilter.from_json(config.filter)
    stages: list[dict] = []
    manifest = {"seed": config.seed, "config": config.to_json(), "stages": stages}
    try:
        corpus = Path(config.corpus)
        _timed("ingest", stages, out, [corpus], lambda: stage_ingest(corpus, out, config.seed))
        base = gmod.load(out / "base.graph")
        _timed("query", stages, out, [out / "base.graph"],
               lambda: stage_query(base, config.query, config.followup_query, out, config.seed))
        gprime = gmod.load(out / "gprime.graph")
        _timed("group", stages, out, [out / "gprime.graph"],
               lambda: stage_group(gprime, config.grouping, out, config.seed))
        groups = load_groups(out / "groups.json")
        _timed("construct", stages, out, [out / "gprime.graph", out / "groups.json"],
               lambda: stage_construct(gprime, groups, config.rule, filt, out, config.seed))
        cands = load_candidates(out)
        _timed("metrics", stages, out, [out / "candidates.json"],
               lambda: stage_metrics(gprime, cands, config.views, filt.min_nodes, config.seed,
                                     config.edge_metric, config.background_samples,
                                     config.background_target, out))
        _timed("discover", stages, out, [out / "metrics" / v / "candidates.json" for v in config.views],
               lambda: stage_discover(config.views, config.n_bins, config.k, config.mode,
                                      config.seed, out))
        _timed("validate", stages, out, [out / "candidates.json"],
               lambda: stage_validate(gprime, cands, config.validate_view, filt.min_nodes,
                                      config.validate_samples, config.seed, out))
    finally:
        write_json(out / "manifest.json", manifest)
    return manifest
