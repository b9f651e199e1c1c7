"""Command-line entry point: ``igcn <command> --config ... --out-dir ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from .data import (
    DatasetManifest,
    ModalityEntry,
    SyntheticSpec,
    generate_synthetic,
    load_params,
    read_features,
    save_params,
    write_csv,
    write_edges,
)
from .gradcheck import run_suite
from .graph import build_similarity_network
from .metrics import MetricsReport

GRADCHECK_TOLERANCE = 1e-4


def _experiment_config(args) -> ex.ExperimentConfig:
    if args.config is None:
        raise ValueError("--config is required for this command")
    cfg = ex.ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.runs is not None:
        cfg = replace(cfg, num_runs=args.runs)
    return cfg


def _metrics_row(report: MetricsReport):
    return [repr(v) for v in report.as_tuple()]


def _history_rows(history):
    for r in history.records:
        yield [r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.val_macro_f1), repr(r.train_accuracy)]


def cmd_synth(args, out: Path) -> None:
    raw = json.loads(Path(args.config).read_text()) if args.config else {}
    spec = SyntheticSpec.from_dict(raw)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    ds = generate_synthetic(spec, out)
    print(f"wrote {ds.num_modalities} modalities x {ds.num_nodes} nodes to {out}")


def cmd_build_graphs(args, out: Path) -> None:
    manifest = DatasetManifest.load(args.config)
    k = manifest.k if args.k is None else args.k
    entries, rows = [], []
    for entry in manifest.modalities:
        adj, rep = build_similarity_network(read_features(entry.features), k, self_loops=False)
        path = out / f"{entry.name}_edges.csv"
        write_edges(path, adj)
        entries.append(ModalityEntry(entry.name, entry.features, path))
        rows.append([entry.name, repr(rep.requested_k), repr(rep.epsilon), repr(rep.achieved_avg_degree), rep.num_edges])
        print(f"{entry.name}: epsilon={rep.epsilon:.6f} avg degree={rep.achieved_avg_degree:.3f}")
    write_csv(out / "thresholds.csv", ["modality", "requested_k", "epsilon", "achieved_avg_degree", "num_edges"], rows)
    replace(manifest, modalities=entries, k=k).save(out / "manifest.json")


def cmd_train(args, out: Path) -> None:
    cfg = _experiment_config(args)
    result = ex.single_run(ex.base_dataset(cfg), cfg, 0)
    save_params(out / "model.igcn", result.params)
    write_csv(out / "history.csv", ["epoch", "train_loss", "val_loss", "val_macro_f1", "train_accuracy"], _history_rows(result.history))
    write_csv(out / "test_metrics.csv", list(MetricsReport.FIELDS), [_metrics_row(result.report)])
    print(f"best epoch {result.history.best_epoch}, stopped at {result.history.stopped_at_epoch}; test macro F1 {result.report.macro_f1:.4f}")


def cmd_evaluate(args, out: Path) -> None:
    cfg = _experiment_config(args)
    if args.model is not None:
        dataset = ex.base_dataset(cfg)
        report = ex.evaluate_params(dataset, load_params(args.model))
        write_csv(out / "test_metrics.csv", list(MetricsReport.FIELDS), [_metrics_row(report)])
        print(f"test macro F1 {report.macro_f1:.4f}")
        return
    result = ex.run_experiment(cfg, out)
    for name, (mu, sd) in result.summary.items():
        print(f"{name}: {mu:.4f} +/- {sd:.4f}")


def cmd_ablate(args, out: Path) -> None:
    results = ex.ablation_run(_experiment_config(args), out)
    for v in ex.ABLATION_ORDER:
        mu, sd = results[v].summary["macro_f1"]
        print(f"{v}: macro F1 {mu:.4f} +/- {sd:.4f}")


def cmd_sweep_k(args, out: Path) -> None:
    cfg = _experiment_config(args)
    ks = cfg.k_sweep or ex.DEFAULT_KS
    points = ex.k_sweep(cfg, ks, out)
    for pt in points:
        mu, sd = pt.result.summary["macro_f1"]
        print(f"k={pt.k:g}: macro F1 {mu:.4f} +/- {sd:.4f}")
    lo, hi = ex.sweep_range(points)
    print(f"macro F1 range across k: {hi - lo:.4f}")


def cmd_export_attention(args, out: Path) -> None:
    cfg = _experiment_config(args)
    base = ex.base_dataset(cfg)
    if args.model is not None:
        params, dataset = load_params(args.model), base
    else:
        result = ex.single_run(base, cfg, 0)
        params, dataset = result.params, result.dataset
    nodes = None if args.nodes is None else [int(n) for n in args.nodes.split(",") if n.strip()]
    rows = ex.export_attention(params, dataset, nodes, out / "attention.csv")
    print(f"exported attention for {len(rows)} nodes")


def cmd_gradcheck(args, out: Path) -> None:
    n = 20 if args.runs is None else args.runs
    base = 0 if args.seed is None else args.seed
    rows, worst = [], 0.0
    for case, err in run_suite(n, base):
        d = case.describe()
        rows.append([d["seed"], d["m"], d["p"], d["c"], d["h"], d["dims"], repr(err)])
        worst = max(worst, err)
    write_csv(out / "gradcheck.csv", ["seed", "m", "p", "c", "h", "dims", "max_relative_error"], rows)
    print(f"{n} instances, worst relative error {worst:.3e}")
    if worst >= GRADCHECK_TOLERANCE:
        raise RuntimeError(f"gradient check failed: {worst:.3e} >= {GRADCHECK_TOLERANCE:g}")


COMMANDS = {
    "build-graphs": cmd_build_graphs,
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "sweep-k": cmd_sweep_k,
    "export-attention": cmd_export_attention,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="igcn", description="Integrative GCN experiments on multi-modal graphs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON manifest / experiment config / synthetic spec")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--out-dir", type=Path, default=Path("."), help="directory for output files")
        p.add_argument("--runs", type=int, help="override the number of runs (gradcheck: instances)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "build-graphs":
            p.add_argument("--k", type=float, help="override the manifest's average degree")
        if name in ("evaluate", "export-attention"):
            p.add_argument("--model", type=Path, help="saved parameter file")
        if name == "export-attention":
            p.add_argument("--nodes", help="comma-separated node ids (default: correctly predicted test nodes)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, args.out_dir)
    except Exception as exc:  # noqa: BLE001 - report any failure as one diagnostic line
        print(f"igcn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
