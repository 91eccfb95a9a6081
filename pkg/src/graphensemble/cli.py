"""Command line entry point: generate, embed, diversity, ensemble, report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, build_synthetic, load_dataset
from .diversity import correlation_matrix
from .embed import load_embedding
from .ensemble import EmbeddingStore, LabelAccess, RoundError, grid_search, run_rounds, split_nodes
from .graph import write_edge_list, write_labels

logger = logging.getLogger("graphensemble")


def _dump_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def cmd_generate(cfg: RunConfig, args):
    if cfg.synthetic is None:
        raise ConfigError("generate needs a 'synthetic' config section")
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    g, labels = build_synthetic(cfg.synthetic, int(cfg.seed))
    write_edge_list(g, out / "graph.edges")
    for name, lab in labels.items():
        write_labels(lab, out / f"labels_{name}.txt")
    print(f"wrote {g} and {len(labels)} label files to {out}")
    return 0


def _store(cfg, g):
    return EmbeddingStore(g, int(cfg.seed), cfg.out_dir() / "cache", cfg.external_files())


def cmd_embed(cfg: RunConfig, args):
    g, labels = load_dataset(cfg)
    store = _store(cfg, g)
    specs = cfg.method_specs()
    dims = [int(d) for d in cfg.dims]
    store.prefetch([(s.method_id, d, p) for s in specs for d in dims for p in s.points()
                    if s.method_id not in store.external], jobs=args.jobs)
    split = split_nodes(labels.labelled_nodes(), cfg.fractions, int(cfg.seed))
    access = LabelAccess(labels, split)
    clf = cfg.classifier_config()
    winners = {}
    for spec in specs:
        cand = grid_search(store, access, spec, dims, clf)
        winners[spec.method_id] = {}
        for d in cand.offered_dims():
            params = cand.best_params[d]
            if spec.method_id in store.external:
                path = store.external[spec.method_id][str(d)]
            else:
                path = str(store.path_for(spec.method_id, d, params).relative_to(cfg.out_dir()))
            winners[spec.method_id][str(d)] = {"params": params, "val_macro_f1": cand.val_scores[d], "file": path}
    _dump_json(winners, cfg.out_dir() / "winners.json")
    print(f"embedding fits: {store.fits}, cache hits: {store.disk_hits}")
    return 0


def cmd_diversity(cfg: RunConfig, args):
    out = cfg.out_dir()
    wpath = out / "winners.json"
    if not wpath.exists():
        raise ConfigError(f"{wpath} missing; run `embed` first")
    winners = json.loads(wpath.read_text(encoding="utf-8"))
    dim = str(cfg.diversity.get("dim", 128))
    missing = [m for m in cfg.methods if dim not in winners.get(m, {})]
    if missing:
        raise ConfigError(f"no cached {dim}-dimensional embedding for: {', '.join(missing)}")
    embs = []
    for m in cfg.methods:
        f = Path(winners[m][dim]["file"])
        embs.append(load_embedding(f if f.is_absolute() else out / f, method_id=m))
    measure = "both" if cfg.diversity.get("rv") else "dcor"
    report = correlation_matrix(embs, measure, ids=list(cfg.methods))
    report.to_csv(out / "dcor.csv", "dcor")
    if report.rv is not None:
        report.to_csv(out / "rv.csv", "rv")
    print(format_matrix(report.method_ids, report.dcor))
    return 0


def format_matrix(ids, m):
    width = max(8, *(len(i) for i in ids))
    lines = [" " * width + "".join(f"{i:>{width + 1}}" for i in ids)]
    for i, row in zip(ids, m):
        lines.append(f"{i:<{width}}" + "".join(f"{v:>{width + 1}.3f}" for v in row))
    return "\n".join(lines)


def format_table(results) -> str:
    """Method / dimensions / mean test macro-F1 table, ensemble last with its gain over the best single method."""
    s = results["summary"]
    rows = []
    for m, v in s["methods"].items():
        dims = v["dimensions"]
        mode = max(set(dims), key=lambda d: (dims.count(d), -d))
        rows.append((m, str(mode), f"{v['test_macro_f1']['mean']:.3f}"))
    sel = results["rounds"][0]["ensemble"]["selection"]
    ens = s["ensemble"]["test_macro_f1"]["mean"]
    rows.append((",".join(m for m, _ in sel), ",".join(str(d) for _, d in sel), f"{ens:.3f} ({s['gain_pct']:.1f}%)"))
    head = ("Methods", "Dimensions", "Macro-F1")
    w = [max(len(r[i]) for r in rows + [head]) for i in range(3)]
    fmt = " | ".join(f"{{:<{x}}}" for x in w)
    sep = "-+-".join("-" * x for x in w)
    lines = [fmt.format(*head), sep] + [fmt.format(*r) for r in rows[:-1]] + [sep, fmt.format(*rows[-1])]
    n_rounds = len(results["rounds"])
    lines.append(f"({n_rounds} round{'s' if n_rounds > 1 else ''}; best single method: {s['best_single_method']}; "
                 f"ensemble selection shown for round 0)")
    return "\n".join(lines)


def cmd_ensemble(cfg: RunConfig, args):
    g, labels = load_dataset(cfg)
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    results = run_rounds(g, labels, cfg.method_specs(), cfg.dims, int(cfg.rounds), int(cfg.seed),
                         cfg.fractions, cfg.classifier_config(), _store(cfg, g), jobs=args.jobs)
    results = {"config": cfg.to_dict(), "graph": {"nodes": g.node_count, "edges": g.edge_count,
                                                   "directed": g.directed}, **results}
    _dump_json(results, out / "results.json")
    table = format_table(results)
    (out / "table.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def cmd_report(cfg: RunConfig, args):
    path = cfg.out_dir() / "results.json"
    if not path.exists():
        raise ConfigError(f"{path} missing; run `ensemble` first")
    results = json.loads(path.read_text(encoding="utf-8"))
    print(format_table(results))
    if args.per_class:
        s = results["summary"]
        names = s["labels"] or [str(i) for i in range(len(s["ensemble"]["per_class_f1_mean"]))]
        best = s["best_single_method"]
        print(f"\nper-class test F1 (mean over rounds): {best} vs ensemble")
        for name, a, b in zip(names, s["methods"][best]["per_class_f1_mean"], s["ensemble"]["per_class_f1_mean"]):
            print(f"  {name:<20} {a:.3f}  {b:.3f}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "embed": cmd_embed,
    "diversity": cmd_diversity,
    "ensemble": cmd_ensemble,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="graphensemble", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="worker processes for embedding fits (1 = reference path)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "report":
            p.add_argument("--per-class", action="store_true", help="also print per-class F1")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = str(Path(args.out).resolve())
        return COMMANDS[args.command](cfg, args)
    except Exception as exc:  # reported as machine-readable JSON
        err = {"error": type(exc).__name__, "message": str(exc),
               "round": exc.round_index if isinstance(exc, RoundError) else None}
        print(json.dumps(err), file=sys.stderr)
        if args.verbose:
            logger.exception("command failed")
        return 2 if isinstance(exc, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())
