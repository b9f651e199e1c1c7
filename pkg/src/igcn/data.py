"""Dataset files, manifests, the synthetic generator and the parameter container.

File layout
-----------
* features: CSV with header ``node_id,<feature columns...>``
* labels:   CSV with header ``node_id,label``
* edges:    CSV with header ``src,dst,weight`` (undirected; either orientation)
* splits:   one CSV per split with header ``node_id``
* manifest: JSON, paths relative to the manifest file::

    {"modalities": [{"name": "mrna", "features": "mrna.csv", "edges": null}],
     "labels": "labels.csv", "splits": null, "k": 3, "num_classes": null}
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import build_similarity_network
from .metrics import stratified_split
from .model import ModalityInput, ModelParams, MultiModalDataset, SplitMask
from .tensor import SparseAdjacency, add_self_loops, sym_normalize

SPLIT_NAMES = ("train", "val", "test")


def _fmt(x: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(x))


# ---------------------------------------------------------------------------
# CSV primitives
# ---------------------------------------------------------------------------


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ValueError(f"{path} is empty")
    return rows[0], rows[1:]


def _ordered_rows(path, rows):
    ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
    if not np.array_equal(np.sort(ids), np.arange(len(ids))):
        raise ValueError(f"{path}: node_id column must be a permutation of 0..{len(ids) - 1}")
    return np.argsort(ids, kind="stable")


def read_features(path) -> np.ndarray:
    header, rows = read_csv(path)
    if len(header) < 2:
        raise ValueError(f"{path}: expected node_id plus at least one feature column")
    order = _ordered_rows(path, rows)
    try:
        x = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    if x.ndim != 2 or x.shape[1] != len(header) - 1:
        raise ValueError(f"{path}: ragged rows")
    return x[order]


def write_features(path, x: np.ndarray) -> None:
    header = ["node_id"] + [f"f{j}" for j in range(x.shape[1])]
    write_csv(path, header, ([i] + [_fmt(v) for v in row] for i, row in enumerate(x)))


def read_labels(path) -> np.ndarray:
    _, rows = read_csv(path)
    order = _ordered_rows(path, rows)
    return np.array([int(r[1]) for r in rows], dtype=np.int64)[order]


def write_labels(path, labels) -> None:
    write_csv(path, ["node_id", "label"], enumerate(int(v) for v in labels))


def read_edges(path, num_nodes: int) -> SparseAdjacency:
    """Load an undirected edge list; symmetrized, deduplicated (max weight), self loops dropped."""
    _, rows = read_csv(path)
    weights: dict[tuple[int, int], float] = {}
    for r in rows:
        a, b = int(r[0]), int(r[1])
        wt = float(r[2]) if len(r) > 2 and r[2] != "" else 1.0
        if not (0 <= a < num_nodes and 0 <= b < num_nodes):
            raise ValueError(f"{path}: edge ({a},{b}) outside [0, {num_nodes})")
        if a == b or wt == 0:
            continue
        key = (min(a, b), max(a, b))
        weights[key] = max(weights.get(key, 0.0), wt)
    if not weights:
        return SparseAdjacency.from_edges(num_nodes, [], [], [])
    pairs = np.array(list(weights.keys()), dtype=np.int64)
    lo, hi, w = pairs[:, 0], pairs[:, 1], np.array(list(weights.values()))
    return SparseAdjacency.from_edges(
        num_nodes, np.concatenate([lo, hi]), np.concatenate([hi, lo]), np.concatenate([w, w])
    )


def write_edges(path, adj: SparseAdjacency) -> None:
    rows = adj.row_ids()
    keep = rows < adj.col_indices
    write_csv(
        path,
        ["src", "dst", "weight"],
        ((int(a), int(b), _fmt(v)) for a, b, v in zip(rows[keep], adj.col_indices[keep], adj.values[keep])),
    )


def read_index_list(path) -> np.ndarray:
    _, rows = read_csv(path)
    return np.array(sorted(int(r[0]) for r in rows), dtype=np.int64)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModalityEntry:
    name: str
    features: Path
    edges: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    modalities: list[ModalityEntry]
    labels: Path
    splits: dict[str, Path] | None = None
    k: float = 3.0
    num_classes: int | None = None

    def __post_init__(self):
        if not self.modalities:
            raise ValueError("manifest needs at least one modality")

    @property
    def has_fixed_edges(self) -> bool:
        return any(e.edges is not None for e in self.modalities)

    @classmethod
    def from_dict(cls, raw: dict, base_dir=".") -> "DatasetManifest":
        base = Path(base_dir)

        def resolve(p):
            return None if p is None else (base / p)

        try:
            mods = [
                ModalityEntry(m.get("name") or f"modality{i}", resolve(m["features"]), resolve(m.get("edges")))
                for i, m in enumerate(raw["modalities"])
            ]
            splits = raw.get("splits")
            if splits is not None:
                splits = {s: resolve(splits[s]) for s in SPLIT_NAMES}
            return cls(mods, resolve(raw["labels"]), splits, float(raw.get("k", 3)), raw.get("num_classes"))
        except KeyError as exc:
            raise ValueError(f"manifest is missing key {exc}") from exc

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read manifest {path}: {exc}") from exc
        return cls.from_dict(raw, path.parent)

    def to_dict(self, base_dir=".") -> dict:
        base = Path(base_dir).resolve()

        def rel(p):
            if p is None:
                return None
            p = Path(p).resolve()
            return str(p.relative_to(base)) if p.is_relative_to(base) else str(p)

        return {
            "modalities": [{"name": e.name, "features": rel(e.features), "edges": rel(e.edges)} for e in self.modalities],
            "labels": rel(self.labels),
            "splits": None if self.splits is None else {s: rel(self.splits[s]) for s in SPLIT_NAMES},
            "k": self.k,
            "num_classes": self.num_classes,
        }

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(path.parent), indent=2, sort_keys=True) + "\n")


def make_modality(name: str, features: np.ndarray, adjacency: SparseAdjacency, report=None) -> ModalityInput:
    """Wrap a self-loop-free graph: add self loops and normalize."""
    return ModalityInput(features, sym_normalize(add_self_loops(adjacency)), name, adjacency, report)


def build_modality(name: str, features: np.ndarray, k: float) -> ModalityInput:
    adj, report = build_similarity_network(features, k, self_loops=False)
    return make_modality(name, features, adj, report)


def load_dataset(manifest: DatasetManifest, split_seed: int = 0, k: float | None = None) -> MultiModalDataset:
    """Materialize a manifest; ``k`` overrides the manifest's graph parameter."""
    k = manifest.k if k is None else k
    labels = read_labels(manifest.labels)
    m = labels.shape[0]
    num_classes = manifest.num_classes if manifest.num_classes is not None else int(labels.max()) + 1
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"label outside [0, {num_classes})")

    modalities = []
    for entry in manifest.modalities:
        x = read_features(entry.features)
        if x.shape[0] != m:
            raise ValueError(f"modality {entry.name!r} has {x.shape[0]} rows but there are {m} labels")
        if entry.edges is not None:
            modalities.append(make_modality(entry.name, x, read_edges(entry.edges, m)))
        else:
            modalities.append(build_modality(entry.name, x, k))

    if manifest.splits is not None:
        masks = SplitMask(*(read_index_list(manifest.splits[s]) for s in SPLIT_NAMES))
    else:
        masks = stratified_split(labels, seed=split_seed)
    return MultiModalDataset(modalities, labels, num_classes, masks)


def save_dataset(dataset: MultiModalDataset, out_dir, *, k: float = 3.0, with_edges: bool = True, with_splits: bool = True) -> Path:
    """Write every file of ``dataset`` plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    entries = []
    for name, mod in zip(dataset.modality_names, dataset.modalities):
        feat = out / f"{name}_features.csv"
        write_features(feat, mod.features)
        edges = None
        if with_edges:
            if mod.adjacency is None:
                raise ValueError(f"modality {name!r} carries no raw adjacency to serialize")
            edges = out / f"{name}_edges.csv"
            write_edges(edges, mod.adjacency)
        entries.append(ModalityEntry(name, feat, edges))
    write_labels(out / "labels.csv", dataset.labels)
    splits = None
    if with_splits:
        splits = {}
        for s in SPLIT_NAMES:
            splits[s] = out / f"split_{s}.csv"
            write_csv(splits[s], ["node_id"], ([int(i)] for i in getattr(dataset.masks, s)))
    manifest = DatasetManifest(entries, out / "labels.csv", splits, k, dataset.num_classes)
    manifest.save(out / "manifest.json")
    return out / "manifest.json"


def datasets_equal(a: MultiModalDataset, b: MultiModalDataset) -> bool:
    if a.num_classes != b.num_classes or not np.array_equal(a.labels, b.labels) or a.masks != b.masks:
        return False
    if a.num_modalities != b.num_modalities:
        return False
    return all(
        np.array_equal(x.features, y.features) and x.norm_adj == y.norm_adj
        for x, y in zip(a.modalities, b.modalities)
    )


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Nodes whose class is visible in only one modality.

    For a node of class ``y`` the modality ``informative[y]`` carries a
    class-specific mean plus noise; every other modality is pure noise for
    that node.
    """

    num_nodes: int = 300
    num_classes: int = 3
    num_modalities: int = 2
    feature_dims: tuple[int, ...] = (20, 20)
    informative: tuple[int, ...] = (0, 1, 0)
    noise_scale: float = 0.5
    seed: int = 0
    k: float = 3.0
    separation: float = 1.0
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if len(self.feature_dims) != self.num_modalities:
            raise ValueError("need one feature dimension per modality")
        if len(self.informative) != self.num_classes:
            raise ValueError("informative map must cover every class")
        if any(not 0 <= i < self.num_modalities for i in self.informative):
            raise ValueError("informative modality index out of range")
        if self.num_nodes < 3 * self.num_classes:
            raise ValueError("need at least three nodes per class")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")
        if self.names and len(self.names) != self.num_modalities:
            raise ValueError("need one name per modality")

    @property
    def modality_names(self) -> list[str]:
        return list(self.names) or [f"modality{i}" for i in range(self.num_modalities)]

    @classmethod
    def from_dict(cls, raw: dict) -> "SyntheticSpec":
        raw = dict(raw)
        for key in ("feature_dims", "informative", "names"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)

    def to_dict(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "num_classes": self.num_classes,
            "num_modalities": self.num_modalities,
            "feature_dims": list(self.feature_dims),
            "informative": list(self.informative),
            "noise_scale": self.noise_scale,
            "seed": self.seed,
            "k": self.k,
            "separation": self.separation,
            "names": self.modality_names,
        }


def synthetic_arrays(spec: SyntheticSpec):
    """Return ``(feature matrices, labels)`` for ``spec``; deterministic in the seed."""
    rng = np.random.default_rng(spec.seed)
    n, c = spec.num_nodes, spec.num_classes
    labels = rng.permutation(np.arange(n) % c)
    features = []
    for i, d in enumerate(spec.feature_dims):
        means = rng.normal(size=(c, d)) * spec.separation
        x = rng.normal(size=(n, d)) * spec.noise_scale
        informative = np.array([spec.informative[y] == i for y in labels])
        x[informative] += means[labels[informative]]
        features.append(x)
    return features, labels


def generate_synthetic(spec: SyntheticSpec, out_dir=None, split_seed: int | None = None) -> MultiModalDataset:
    """Build the synthetic dataset; with ``out_dir`` also write features, labels and manifest."""
    features, labels = synthetic_arrays(spec)
    modalities = [build_modality(name, x, spec.k) for name, x in zip(spec.modality_names, features)]
    masks = stratified_split(labels, seed=spec.seed if split_seed is None else split_seed)
    dataset = MultiModalDataset(modalities, labels, spec.num_classes, masks)
    if out_dir is not None:
        save_dataset(dataset, out_dir, k=spec.k, with_edges=False, with_splits=False)
        (Path(out_dir) / "synthetic_spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    return dataset


# ---------------------------------------------------------------------------
# Parameter container
# ---------------------------------------------------------------------------

PARAMS_MAGIC = b"IGCNPRM\x00"
PARAMS_VERSION = 1


def save_params(path, params: ModelParams) -> None:
    """Binary layout (little endian): magic, u32 version, u16-prefixed variant,
    u32 tensor count, then per tensor a u16-prefixed name and u32 rows/cols,
    then all tensor data as f64 in table order."""
    out = bytearray(PARAMS_MAGIC)
    out += struct.pack("<I", PARAMS_VERSION)
    variant = params.variant.encode()
    out += struct.pack("<H", len(variant)) + variant
    tensors = params.tensors()
    out += struct.pack("<I", len(tensors))
    for name, t in zip(params.names(), tensors):
        raw = name.encode()
        out += struct.pack("<H", len(raw)) + raw + struct.pack("<II", *t.shape)
    for t in tensors:
        out += np.ascontiguousarray(t, dtype="<f8").tobytes()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(bytes(out))


def load_params(path) -> ModelParams:
    buf = Path(path).read_bytes()
    if not buf.startswith(PARAMS_MAGIC):
        raise ValueError(f"{path}: not an IGCN parameter file")
    pos = len(PARAMS_MAGIC)

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, buf, pos)
        pos += struct.calcsize(fmt)
        return vals

    try:
        (version,) = take("<I")
        if version != PARAMS_VERSION:
            raise ValueError(f"{path}: unsupported parameter file version {version}")
        (vlen,) = take("<H")
        variant = buf[pos : pos + vlen].decode()
        pos += vlen
        (count,) = take("<I")
        table = []
        for _ in range(count):
            (nlen,) = take("<H")
            name = buf[pos : pos + nlen].decode()
            pos += nlen
            table.append((name, take("<II")))
        tensors = {}
        for name, shape in table:
            size = shape[0] * shape[1]
            tensors[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * size
    except struct.error as exc:
        raise ValueError(f"{path}: truncated parameter file") from exc
    if pos != len(buf):
        raise ValueError(f"{path}: trailing bytes in parameter file")

    gcn = [tensors[n] for n in sorted((n for n in tensors if n.startswith("gcn.")), key=lambda s: int(s[4:]))]
    heads = [tensors[n] for n in sorted((n for n in tensors if n.startswith("head.")), key=lambda s: int(s[5:]))]
    return ModelParams(gcn, tensors["attn.weight"], tensors["attn.bias"], heads, variant)
