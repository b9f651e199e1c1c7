"""Repeated-split evaluation, ablations, k sweeps and attention export.

All report files are CSV. Floats are written with ``repr`` so reruns with the
same configuration produce byte-identical files.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import DatasetManifest, SyntheticSpec, build_modality, load_dataset, synthetic_arrays, write_csv
from .metrics import MetricsReport, classification_report, stratified_split
from .model import VARIANTS, ModelParams, MultiModalDataset, forward, predict
from .train import TrainConfig, TrainHistory, train

log = logging.getLogger(__name__)

# row order mirrors the ablation table: attention off, graph head off, full
ABLATION_ORDER = ("no-attention", "mlp-head", "full")
DEFAULT_KS = (3, 5, 7, 9)


@dataclass(frozen=True)
class ExperimentConfig:
    """Where the data comes from and how to train on it.

    Exactly one of ``manifest`` and ``synthetic`` is set. Run ``r`` uses
    ``seed + r`` both for its stratified split and for parameter init.
    """

    manifest: DatasetManifest | None = None
    synthetic: SyntheticSpec | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    num_runs: int = 10
    variant: str = "full"
    k_sweep: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if (self.manifest is None) == (self.synthetic is None):
            raise ValueError("config needs exactly one of 'manifest' and 'synthetic'")
        if self.num_runs < 1:
            raise ValueError("num_runs must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")

    @classmethod
    def from_dict(cls, raw: dict, base_dir=".") -> "ExperimentConfig":
        base = Path(base_dir)
        manifest = synthetic = None
        if "manifest" in raw:
            src = raw["manifest"]
            manifest = DatasetManifest.from_dict(src, base) if isinstance(src, dict) else DatasetManifest.load(base / src)
        if "synthetic" in raw:
            synthetic = SyntheticSpec.from_dict(raw["synthetic"])
        sweep = raw.get("k_sweep")
        return cls(
            manifest=manifest,
            synthetic=synthetic,
            train=TrainConfig(**raw.get("train", {})),
            num_runs=int(raw.get("num_runs", 10)),
            variant=raw.get("variant", "full"),
            k_sweep=None if sweep is None else tuple(sweep),
            seed=int(raw.get("seed", 0)),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw, path.parent)

    @property
    def k(self) -> float:
        return self.manifest.k if self.manifest is not None else self.synthetic.k

    @property
    def fixed_splits(self) -> bool:
        return self.manifest is not None and self.manifest.splits is not None

    @property
    def fixed_edges(self) -> bool:
        return self.manifest is not None and self.manifest.has_fixed_edges


def base_dataset(config: ExperimentConfig, k: float | None = None) -> MultiModalDataset:
    """Load or generate the dataset once; graphs do not depend on the run."""
    if config.manifest is not None:
        return load_dataset(config.manifest, split_seed=config.seed, k=k)
    spec = config.synthetic
    k = spec.k if k is None else k
    features, labels = synthetic_arrays(spec)
    mods = [build_modality(n, x, k) for n, x in zip(spec.modality_names, features)]
    return MultiModalDataset(mods, labels, spec.num_classes, stratified_split(labels, seed=config.seed))


def dataset_for_run(base: MultiModalDataset, config: ExperimentConfig, run: int) -> MultiModalDataset:
    if config.fixed_splits:
        return base
    return base.with_masks(stratified_split(base.labels, seed=config.seed + run))


@dataclass
class RunResult:
    run: int
    seed: int
    variant: str
    report: MetricsReport
    history: TrainHistory
    params: ModelParams
    dataset: MultiModalDataset


def evaluate_params(dataset: MultiModalDataset, params: ModelParams, nodes=None) -> MetricsReport:
    nodes = dataset.masks.test if nodes is None else np.asarray(nodes)
    pred = predict(forward(dataset, params, "eval").logits)
    return classification_report(dataset.labels[nodes], pred[nodes], dataset.num_classes)


def single_run(base: MultiModalDataset, config: ExperimentConfig, run: int, variant: str | None = None) -> RunResult:
    variant = variant or config.variant
    seed = config.seed + run
    dataset = dataset_for_run(base, config, run)
    tc = TrainConfig(**{**asdict(config.train), "seed": seed})
    params, history = train(dataset, tc, variant)
    report = evaluate_params(dataset, params)
    log.info("run %d (%s): macro F1 %.4f, best epoch %d", run, variant, report.macro_f1, history.best_epoch)
    return RunResult(run, seed, variant, report, history, params, dataset)


def summarize(reports) -> dict[str, tuple[float, float]]:
    """Mean and population standard deviation of every metric."""
    table = np.array([r.as_tuple() for r in reports], dtype=np.float64)
    return {
        name: (float(table[:, j].mean()), float(table[:, j].std()))
        for j, name in enumerate(MetricsReport.FIELDS)
    }


@dataclass
class ExperimentResult:
    variant: str
    runs: list[RunResult]

    @property
    def summary(self) -> dict[str, tuple[float, float]]:
        return summarize([r.report for r in self.runs])


RUN_HEADER = ["run", "seed", "variant", "best_epoch", "stopped_at_epoch", *MetricsReport.FIELDS]


def _run_row(r: RunResult) -> list:
    return [r.run, r.seed, r.variant, r.history.best_epoch, r.history.stopped_at_epoch, *map(repr, r.report.as_tuple())]


def write_experiment(result: ExperimentResult, out_dir) -> None:
    out = Path(out_dir)
    write_csv(out / "runs.csv", RUN_HEADER, (_run_row(r) for r in result.runs))
    write_csv(
        out / "summary.csv",
        ["metric", "mean", "std"],
        ([name, repr(mu), repr(sd)] for name, (mu, sd) in result.summary.items()),
    )


def run_experiment(config: ExperimentConfig, out_dir=None, *, variant: str | None = None, dataset=None) -> ExperimentResult:
    base = base_dataset(config) if dataset is None else dataset
    variant = variant or config.variant
    result = ExperimentResult(variant, [single_run(base, config, r, variant) for r in range(config.num_runs)])
    if out_dir is not None:
        write_experiment(result, out_dir)
    return result


def ablation_run(config: ExperimentConfig, out_dir=None) -> dict[str, ExperimentResult]:
    """Train every variant on the same splits and seeds."""
    base = base_dataset(config)
    results = {v: run_experiment(config, variant=v, dataset=base) for v in ABLATION_ORDER}
    if out_dir is not None:
        out = Path(out_dir)
        rows = []
        for v in ABLATION_ORDER:
            mu, sd = results[v].summary["macro_f1"]
            rows.append([v, "no" if v == "no-attention" else "yes", "no" if v == "mlp-head" else "yes", repr(mu), repr(sd)])
        write_csv(out / "ablation.csv", ["variant", "attention", "graph_prediction", "macro_f1_mean", "macro_f1_std"], rows)
        write_csv(out / "ablation_runs.csv", RUN_HEADER, (_run_row(r) for v in ABLATION_ORDER for r in results[v].runs))
    return results


@dataclass
class SweepPoint:
    k: float
    result: ExperimentResult
    graphs: list[dict]  # per modality: name, epsilon, achieved_avg_degree, num_edges


def k_sweep(config: ExperimentConfig, ks=DEFAULT_KS, out_dir=None) -> list[SweepPoint]:
    if config.fixed_edges:
        raise ValueError("k sweep needs similarity-built graphs; manifest supplies fixed edge lists")
    points = []
    for k in ks:
        base = base_dataset(config, k=k)
        graphs = [
            {
                "modality": mod.name,
                "epsilon": mod.report.epsilon,
                "achieved_avg_degree": mod.report.achieved_avg_degree,
                "num_edges": mod.report.num_edges,
            }
            for mod in base.modalities
        ]
        points.append(SweepPoint(float(k), run_experiment(config, dataset=base), graphs))

    if out_dir is not None:
        out = Path(out_dir)
        rows = []
        for pt in points:
            s = pt.result.summary
            rows.append([repr(pt.k), *(repr(v) for name in MetricsReport.FIELDS for v in s[name])])
        header = ["k"] + [f"{name}_{stat}" for name in MetricsReport.FIELDS for stat in ("mean", "std")]
        write_csv(out / "sweep.csv", header, rows)
        write_csv(
            out / "sweep_graphs.csv",
            ["k", "modality", "epsilon", "achieved_avg_degree", "num_edges"],
            (
                [repr(pt.k), g["modality"], repr(g["epsilon"]), repr(g["achieved_avg_degree"]), g["num_edges"]]
                for pt in points
                for g in pt.graphs
            ),
        )
        lo, hi = sweep_range(points)
        write_csv(out / "sweep_range.csv", ["metric", "min", "max", "range"], [["macro_f1_mean", repr(lo), repr(hi), repr(hi - lo)]])
    return points


def sweep_range(points: list[SweepPoint]) -> tuple[float, float]:
    means = [pt.result.summary["macro_f1"][0] for pt in points]
    return min(means), max(means)


@dataclass(frozen=True)
class AttentionRow:
    node: int
    true_label: int
    pred_label: int
    correct: bool
    coeffs: tuple[float, ...]


def export_attention(params: ModelParams, dataset: MultiModalDataset, nodes=None, path=None) -> list[AttentionRow]:
    """Per-node attention over modalities from an eval-mode pass.

    By default the rows cover the correctly predicted test nodes.
    """
    cache = forward(dataset, params, "eval")
    pred = predict(cache.logits)
    if nodes is None:
        test = dataset.masks.test
        nodes = test[pred[test] == dataset.labels[test]]
    rows = [
        AttentionRow(int(n), int(dataset.labels[n]), int(pred[n]), bool(pred[n] == dataset.labels[n]), tuple(map(float, cache.attn_coeffs[n])))
        for n in np.asarray(nodes, dtype=np.int64)
    ]
    if path is not None:
        header = ["node_id", "true_label", "pred_label", "correct"] + [f"attn_{n}" for n in dataset.modality_names]
        write_csv(path, header, ([r.node, r.true_label, r.pred_label, int(r.correct), *map(repr, r.coeffs)] for r in rows))
    return rows


def class_attention(rows: list[AttentionRow], num_classes: int, num_modalities: int) -> np.ndarray:
    """Mean attention per (true class, modality); NaN for classes with no rows."""
    out = np.full((num_classes, num_modalities), np.nan)
    for c in range(num_classes):
        sel = [r.coeffs for r in rows if r.true_label == c]
        if sel:
            out[c] = np.mean(sel, axis=0)
    return out
