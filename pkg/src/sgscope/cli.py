"""Command line entry point: one subcommand per pipeline stage plus ``run`` and ``synth``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import graph as gmod
from .construct import CandidateFilter
from .ingest import network_view
from .metrics import MetricBundle, compute_metrics
from .pipeline import (
    VIEWS, ConfigError, PipelineConfig, PipelineError, histograms_csv, load_candidates,
    load_groups, read_json, run_discovery, run_pipeline, stage_construct, stage_group,
    stage_ingest, stage_query, view_component, write_json,
)
from .synth import SynthParams, generate_synthetic_corpus
from .validate import compare_to_baseline, stands_out_low

log = logging.getLogger("sgscope")


def _json_arg(text: str | None):
    """Inline JSON or a path to a JSON file."""
    if text is None:
        return None
    p = Path(text)
    if p.is_file():
        return json.loads(p.read_text())
    return json.loads(text)


def cmd_ingest(a) -> int:
    stage_ingest(Path(a.corpus), Path(a.out), a.seed)
    return 0


def cmd_query(a) -> int:
    stage_query(gmod.load(a.graph), _json_arg(a.query), _json_arg(a.followup), Path(a.out), a.seed)
    return 0


def cmd_group(a) -> int:
    spec = a.spec if a.spec.startswith("auto") else _json_arg(a.spec)
    stage_group(gmod.load(a.graph), spec, Path(a.out), a.seed)
    return 0


def cmd_construct(a) -> int:
    filt = CandidateFilter.from_json(_json_arg(a.filter))
    out = Path(a.out)
    stage_construct(gmod.load(a.graph), load_groups(a.groups), a.rule, filt, out, a.seed)
    if a.dot:
        for c in load_candidates(out):
            (out / "candidates" / f"{c.id.replace('/', '_').replace(':', '_')}.dot").write_text(
                gmod.to_dot(c.graph, "candidate"))
    return 0


def cmd_metrics(a) -> int:
    g = gmod.load(a.graph)
    if a.view != "raw":
        g = view_component(g, a.view, a.min_nodes)
        if g is None:
            log.error("view %s has no component with %d nodes", a.view, a.min_nodes)
            return 1
    bundle = compute_metrics(g, weighted=a.weighted, edge_metric=a.edge_metric)
    bundle.meta["view"] = a.view
    write_json(Path(a.out), bundle.to_json())
    return 0


def cmd_discover(a) -> int:
    ref = MetricBundle.from_json(read_json(a.reference))
    bundles = {}
    for p in sorted(Path(a.candidates).glob("*.json")):
        doc = read_json(p)
        if "bundles" in doc:
            bundles.update({k: MetricBundle.from_json(v) for k, v in doc["bundles"].items()})
        else:
            bundles[doc.get("meta", {}).get("candidate_id", p.stem)] = MetricBundle.from_json(doc)
    mode = "literal" if a.alg2_literal else "prose"
    result, sets, hists = run_discovery(ref, bundles, a.bins, a.k, mode, str(a.reference))
    if result is None:
        log.error("need at least two candidate bundles, found %d", len(sets))
        return 1
    write_json(Path(a.out), {"seed": a.seed, "mode": mode, "result": result.to_json(),
                             "divergence_sets": [s.to_json() for s in sets]})
    if a.csv_dir:
        d = Path(a.csv_dir)
        d.mkdir(parents=True, exist_ok=True)
        for cid, h in hists.items():
            (d / f"{cid.replace('/', '_').replace(':', '_')}.csv").write_text(histograms_csv(h))
    return 0


def cmd_validate(a) -> int:
    cand = gmod.load(a.candidate)
    bg = gmod.load(a.background)
    if a.view != "raw":
        cand = view_component(cand, a.view, 3)
        bg = network_view(bg, a.view)
        if cand is None:
            log.error("candidate %s view is too small", a.view)
            return 1
    prof = compare_to_baseline(cand, bg, a.samples, a.seed)
    write_json(Path(a.out), {"seed": a.seed, **prof.to_json(),
                             "below_baseline": stands_out_low(prof)})
    return 0


def cmd_run(a) -> int:
    cfg = PipelineConfig.from_json(Path(a.config))
    if a.alg2_literal:
        cfg.mode = "literal"
    if a.out:
        cfg.out_dir = a.out
    manifest = run_pipeline(cfg)
    print(json.dumps({s["stage"]: s["wall_time_s"] for s in manifest["stages"]}))
    return 0


def cmd_synth(a) -> int:
    params = SynthParams.from_json(_json_arg(a.params)) if a.params else SynthParams()
    if a.seed is not None:
        params.seed = a.seed
    generate_synthetic_corpus(params).write(Path(a.out), a.labels)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sgscope",
                                 description="query-driven interesting subgraph discovery")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="post records (JSONL) to a base graph snapshot")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("query", help="interest query to a background graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--query", required=True, help="JSON text or file")
    p.add_argument("--followup", help="optional narrowing query")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("group", help="group nodes of a background graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--spec", default="auto", help="JSON spec, file, 'auto' or 'auto:pattern'")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_group)

    p = sub.add_parser("construct", help="candidate subgraphs from groups")
    p.add_argument("--graph", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--rule", default="g1", choices=["g1", "g2", "g3", "g3:g1", "g3:g2"])
    p.add_argument("--filter", help="candidate filter JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--dot", action="store_true", help="also export each candidate as DOT")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_construct)

    p = sub.add_parser("metrics", help="metric bundle of one graph snapshot")
    p.add_argument("--graph", required=True)
    p.add_argument("--view", default="raw", choices=["raw", "full", *VIEWS])
    p.add_argument("--edge-metric", default="shortest_path",
                   choices=["shortest_path", "current_flow"])
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--min-nodes", type=int, default=2,
                   help="smallest view component worth measuring")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("discover", help="rank candidate bundles against a reference")
    p.add_argument("--reference", required=True)
    p.add_argument("--candidates", required=True, help="directory of bundle JSON files")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--alg2-literal", action="store_true",
                   help="use the pseudocode's conditions verbatim")
    p.add_argument("--csv-dir", help="write per-candidate histogram CSVs here")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_discover)

    p = sub.add_parser("validate", help="core-periphery profile against a random-walk baseline")
    p.add_argument("--candidate", required=True)
    p.add_argument("--background", required=True)
    p.add_argument("--view", default="raw", choices=["raw", *VIEWS])
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("run", help="whole pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--alg2-literal", action="store_true")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("synth", help="synthetic corpus with planted groups")
    p.add_argument("--params", help="JSON parameters (text or file)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="corpus JSONL path")
    p.add_argument("--labels", help="labels path (default: <out>.labels.json)")
    p.set_defaults(fn=cmd_synth)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except PipelineError as exc:
        log.error("%s", exc)
        return 2
    except (ConfigError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
