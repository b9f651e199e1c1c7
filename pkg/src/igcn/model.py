"""IGCN forward pass.

One GCN layer per modality produces node embeddings, a shared scoring vector
turns each node's embeddings into per-node attention weights over the
modalities, the weighted sum is propagated through every modality's graph
again and the per-graph logits are summed.

Three variants share this code path:

* ``full``          the complete model
* ``no-attention``  attention replaced by a uniform average over modalities
* ``mlp-head``      the graph-propagated head replaced by a single dense map
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .tensor import (
    ShapeError,
    SparseAdjacency,
    add_bias_column,
    as_matrix,
    hadamard_broadcast_column,
    leaky_relu,
    matmul,
    relu,
    row_softmax,
    spmm,
)

VARIANTS = ("full", "no-attention", "mlp-head")
ATTENTION_SLOPE = 0.2


@dataclass(frozen=True, eq=False)
class ModalityInput:
    features: np.ndarray
    norm_adj: SparseAdjacency
    name: str = ""
    # graph before self loops / normalization, kept for serialization
    adjacency: SparseAdjacency | None = None
    report: object | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", as_matrix(self.features, "features"))
        if self.features.shape[0] != self.norm_adj.num_nodes:
            raise ShapeError(
                f"modality {self.name!r}: {self.features.shape[0]} feature rows "
                f"vs {self.norm_adj.num_nodes} graph nodes"
            )


@dataclass(frozen=True)
class SplitMask:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            arr = np.asarray(getattr(self, f.name), dtype=np.int64).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, f.name, arr)

    def validate(self, m: int) -> None:
        parts = [self.train, self.val, self.test]
        allidx = np.concatenate(parts)
        if allidx.size and (allidx.min() < 0 or allidx.max() >= m):
            raise ValueError("split index outside [0, m)")
        if np.unique(allidx).size != allidx.size:
            raise ValueError("split masks overlap or repeat an index")

    def __eq__(self, other):
        return all(np.array_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))


@dataclass(frozen=True, eq=False)
class MultiModalDataset:
    modalities: list[ModalityInput]
    labels: np.ndarray
    num_classes: int
    masks: SplitMask

    def __post_init__(self):
        if not self.modalities:
            raise ValueError("dataset needs at least one modality")
        labels = np.asarray(self.labels, dtype=np.int64).ravel()
        object.__setattr__(self, "labels", labels)
        m = labels.shape[0]
        for mod in self.modalities:
            if mod.features.shape[0] != m:
                raise ShapeError(f"modality {mod.name!r} has {mod.features.shape[0]} rows, labels have {m}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        self.masks.validate(m)
        missing = set(range(self.num_classes)) - set(labels[self.masks.train].tolist())
        if self.masks.train.size and missing:
            raise ValueError(f"classes {sorted(missing)} absent from the training mask")

    @property
    def num_nodes(self) -> int:
        return int(self.labels.shape[0])

    @property
    def num_modalities(self) -> int:
        return len(self.modalities)

    @property
    def feature_dims(self) -> list[int]:
        return [mod.features.shape[1] for mod in self.modalities]

    @property
    def modality_names(self) -> list[str]:
        return [mod.name or f"modality{i}" for i, mod in enumerate(self.modalities)]

    def with_masks(self, masks: SplitMask) -> "MultiModalDataset":
        return replace(self, masks=masks)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """All learnable tensors. ``attn_bias`` is stored as a 1x1 matrix."""

    gcn_weights: list[np.ndarray]
    attn_weight: np.ndarray
    attn_bias: np.ndarray
    head_weights: list[np.ndarray]
    variant: str = "full"

    def tensors(self) -> list[np.ndarray]:
        return [*self.gcn_weights, self.attn_weight, self.attn_bias, *self.head_weights]

    def names(self) -> list[str]:
        return (
            [f"gcn.{i}" for i in range(len(self.gcn_weights))]
            + ["attn.weight", "attn.bias"]
            + [f"head.{i}" for i in range(len(self.head_weights))]
        )

    def with_tensors(self, tensors):
        p = len(self.gcn_weights)
        tensors = list(tensors)
        if len(tensors) != len(self.tensors()):
            raise ShapeError("tensor count does not match parameter layout")
        for old, new in zip(self.tensors(), tensors):
            if old.shape != new.shape:
                raise ShapeError(f"shape {new.shape} does not match {old.shape}")
        return replace(
            self,
            gcn_weights=tensors[:p],
            attn_weight=tensors[p],
            attn_bias=tensors[p + 1],
            head_weights=tensors[p + 2 :],
        )

    @property
    def hidden(self) -> int:
        return self.attn_weight.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ModelParams) or self.variant != other.variant:
            return False
        a, b = self.tensors(), other.tensors()
        return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


@dataclass
class ForwardCache:
    propagated: list[np.ndarray]  # normAdj_i (X_i * dropout mask)
    pre_activations: list[np.ndarray]
    embeddings: list[np.ndarray]
    attn_logits: np.ndarray
    attn_coeffs: np.ndarray
    fused: np.ndarray
    smoothed: list[np.ndarray]  # normAdj_i Z, one per head weight
    logits: np.ndarray
    dropout_masks: list[np.ndarray] = field(default_factory=list)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(dims, hidden: int, num_classes: int, seed: int, variant: str = "full") -> ModelParams:
    if hidden < 1 or num_classes < 2:
        raise ValueError("need hidden >= 1 and at least two classes")
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    rng = np.random.default_rng(seed)
    gcn = [_glorot(rng, d, hidden) for d in dims]
    w_a = _glorot(rng, hidden, 1)
    n_heads = 1 if variant == "mlp-head" else len(gcn)
    heads = [_glorot(rng, hidden, num_classes) for _ in range(n_heads)]
    return ModelParams(gcn, w_a, np.zeros((1, 1)), heads, variant)


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted-dropout multiplier: 0 for dropped entries, 1/(1-rate) for kept."""
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def gcn_layer_forward(modality: ModalityInput, w, mask=None):
    """Return ``(pre_activation, embedding)`` of one graph-convolution layer."""
    x = modality.features if mask is None else modality.features * mask
    pre = matmul(spmm(modality.norm_adj, x), w)
    return pre, relu(pre)


def attention_coefficients(embeddings, w_a, b):
    """Per-node softmax over modalities of ``leaky_relu(h W_a + b)``.

    Returns ``(logits, coeffs)``, both ``m x p``.
    """
    if not embeddings:
        raise ValueError("attention needs at least one embedding")
    m, h = embeddings[0].shape
    if any(e.shape != (m, h) for e in embeddings):
        raise ShapeError("all embeddings must share one shape")
    b = float(np.asarray(b).reshape(-1)[0])
    scores = np.hstack([add_bias_column(matmul(e, w_a), b) for e in embeddings])
    logits = leaky_relu(scores, ATTENTION_SLOPE)
    return logits, row_softmax(logits)


def fuse_embeddings(embeddings, coeffs) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (embeddings[0].shape[0], len(embeddings)):
        raise ShapeError(f"coefficients {coeffs.shape} for {len(embeddings)} embeddings")
    z = np.zeros_like(embeddings[0])
    for i, e in enumerate(embeddings):
        if e.shape != z.shape:
            raise ShapeError("all embeddings must share one shape")
        z = z + hadamard_broadcast_column(e, coeffs[:, i])
    return z


def prediction_head(norm_adjs, z, head_weights) -> np.ndarray:
    """Sum over graphs of ``normAdj_i Z W_i``; raw logits, no softmax."""
    if not norm_adjs or len(norm_adjs) != len(head_weights):
        raise ShapeError("need one head weight per graph")
    out = None
    for adj, w in zip(norm_adjs, head_weights):
        term = matmul(spmm(adj, z), w)
        out = term if out is None else out + term
    return out


def check_params(dataset: MultiModalDataset, params: ModelParams) -> None:
    if len(params.gcn_weights) != dataset.num_modalities:
        raise ShapeError(f"{len(params.gcn_weights)} GCN weights for {dataset.num_modalities} modalities")
    h = params.hidden
    for d, w in zip(dataset.feature_dims, params.gcn_weights):
        if w.shape != (d, h):
            raise ShapeError(f"GCN weight {w.shape}, expected {(d, h)}")
    if params.attn_weight.shape != (h, 1) or params.attn_bias.shape != (1, 1):
        raise ShapeError("attention parameters have the wrong shape")
    expected_heads = 1 if params.variant == "mlp-head" else dataset.num_modalities
    if len(params.head_weights) != expected_heads:
        raise ShapeError(f"{len(params.head_weights)} head weights, expected {expected_heads}")
    for w in params.head_weights:
        if w.shape != (h, dataset.num_classes):
            raise ShapeError(f"head weight {w.shape}, expected {(h, dataset.num_classes)}")


def forward(
    dataset: MultiModalDataset,
    params: ModelParams,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    dropout_rate: float = 0.5,
) -> ForwardCache:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    check_params(dataset, params)
    use_dropout = mode == "train" and dropout_rate > 0
    if use_dropout and rng is None:
        raise ValueError("train mode with dropout needs an rng")

    masks, propagated, pre, emb = [], [], [], []
    for mod, w in zip(dataset.modalities, params.gcn_weights):
        x = mod.features
        if use_dropout:
            mask = dropout_mask(rng, x.shape, dropout_rate)
            masks.append(mask)
            x = x * mask
        ax = spmm(mod.norm_adj, x)
        p = matmul(ax, w)
        propagated.append(ax)
        pre.append(p)
        emb.append(relu(p))

    m, n_mod = dataset.num_nodes, dataset.num_modalities
    if params.variant == "no-attention":
        logits = np.zeros((m, n_mod))
        coeffs = np.full((m, n_mod), 1.0 / n_mod)
    else:
        logits, coeffs = attention_coefficients(emb, params.attn_weight, params.attn_bias)
    z = fuse_embeddings(emb, coeffs)

    if params.variant == "mlp-head":
        smoothed = [z]
        y_hat = matmul(z, params.head_weights[0])
    else:
        smoothed = [spmm(mod.norm_adj, z) for mod in dataset.modalities]
        y_hat = None
        for az, w in zip(smoothed, params.head_weights):
            term = matmul(az, w)
            y_hat = term if y_hat is None else y_hat + term

    return ForwardCache(propagated, pre, emb, logits, coeffs, z, smoothed, y_hat, masks)


def log_softmax(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def masked_cross_entropy(logits, labels, mask) -> float:
    """Summed (not averaged) cross entropy over the nodes in ``mask``."""
    mask = np.asarray(mask, dtype=np.int64).ravel()
    if mask.size == 0:
        raise ValueError("loss mask is empty")
    labels = np.asarray(labels, dtype=np.int64)
    logp = log_softmax(np.asarray(logits)[mask])
    return float(-logp[np.arange(mask.size), labels[mask]].sum())


def predict(logits) -> np.ndarray:
    return np.argmax(logits, axis=1)
