"""Hand-derived gradients, Adam and the early-stopped training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .metrics import classification_report
from .model import (
    ATTENTION_SLOPE,
    ForwardCache,
    ModelParams,
    MultiModalDataset,
    check_params,
    forward,
    init_params,
    masked_cross_entropy,
    predict,
)
from .tensor import ShapeError, spmm

log = logging.getLogger(__name__)


class Gradients(ModelParams):
    """Loss gradients laid out exactly like :class:`ModelParams`."""


def _as_mask(mask, m: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.int64).ravel()
    if mask.size == 0:
        raise ValueError("loss mask is empty")
    if np.unique(mask).size != mask.size:
        raise ValueError("loss mask repeats a node index")
    if mask.min() < 0 or mask.max() >= m:
        raise ValueError("loss mask index outside [0, m)")
    return mask


def backward(dataset: MultiModalDataset, params: ModelParams, cache: ForwardCache, mask):
    """Exact gradient of the summed masked cross entropy.

    ``cache`` must come from :func:`forward` on the same dataset and params;
    the dropout masks it recorded are reused through the cached propagated
    features. Returns ``(loss, Gradients)``.
    """
    check_params(dataset, params)
    m = dataset.num_nodes
    if cache.logits.shape != (m, dataset.num_classes) or len(cache.embeddings) != dataset.num_modalities:
        raise ShapeError("forward cache does not match dataset/params")
    mask = _as_mask(mask, m)
    labels = dataset.labels
    loss = masked_cross_entropy(cache.logits, labels, mask)

    # d loss / d logits: softmax minus one-hot on masked rows
    d_logits = np.zeros_like(cache.logits)
    sel = cache.logits[mask]
    probs = np.exp(sel - sel.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    probs[np.arange(mask.size), labels[mask]] -= 1.0
    d_logits[mask] = probs

    if params.variant == "mlp-head":
        d_heads = [cache.fused.T @ d_logits]
        d_fused = d_logits @ params.head_weights[0].T
    else:
        d_heads = [az.T @ d_logits for az in cache.smoothed]
        d_fused = np.zeros_like(cache.fused)
        # normalized adjacency is symmetric, so it is its own transpose
        for mod, w in zip(dataset.modalities, params.head_weights):
            d_fused += spmm(mod.norm_adj, d_logits @ w.T)

    coeffs = cache.attn_coeffs
    d_emb = [coeffs[:, [i]] * d_fused for i in range(dataset.num_modalities)]

    d_wa = np.zeros_like(params.attn_weight)
    d_b = np.zeros((1, 1))
    if params.variant != "no-attention":
        d_coeffs = np.column_stack([(d_fused * h).sum(axis=1) for h in cache.embeddings])
        d_logit_attn = coeffs * (d_coeffs - (d_coeffs * coeffs).sum(axis=1, keepdims=True))
        # subgradient at 0 follows the negative branch
        d_scores = d_logit_attn * np.where(cache.attn_logits > 0, 1.0, ATTENTION_SLOPE)
        for i, h in enumerate(cache.embeddings):
            d_wa += h.T @ d_scores[:, [i]]
            d_emb[i] = d_emb[i] + d_scores[:, [i]] @ params.attn_weight.T
        d_b[0, 0] = d_scores.sum()

    d_gcn = []
    for ax, pre, d_h in zip(cache.propagated, cache.pre_activations, d_emb):
        d_gcn.append(ax.T @ (d_h * (pre > 0)))

    grads = Gradients(d_gcn, d_wa, d_b, d_heads, params.variant)
    for g in grads.tensors():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    return loss, grads


def loss_and_grad(dataset, params, mask):
    """Eval-mode (deterministic) loss and gradient."""
    cache = forward(dataset, params, "eval")
    return backward(dataset, params, cache, mask)


def finite_difference_check(dataset, params: ModelParams, mask, step: float = 1e-5, *, detail: bool = False):
    """Largest relative gap between analytic and central-difference gradients.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, 1e-8)``. With
    ``detail`` a per-tensor dict of maxima is returned alongside.
    """
    if not step > 0:
        raise ValueError("finite-difference step must be positive")
    _, grads = loss_and_grad(dataset, params, mask)

    def f(p):
        return masked_cross_entropy(forward(dataset, p, "eval").logits, dataset.labels, mask)

    tensors = [t.copy() for t in params.tensors()]
    per_tensor = {}
    worst = 0.0
    for name, t, g in zip(params.names(), tensors, grads.tensors()):
        tensor_worst = 0.0
        for idx in np.ndindex(t.shape):
            orig = t[idx]
            t[idx] = orig + step
            up = f(params.with_tensors(tensors))
            t[idx] = orig - step
            down = f(params.with_tensors(tensors))
            t[idx] = orig
            numeric = (up - down) / (2 * step)
            analytic = g[idx]
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            tensor_worst = max(tensor_worst, float(rel))
        per_tensor[name] = tensor_worst
        worst = max(worst, tensor_worst)
    return (worst, per_tensor) if detail else worst


def kink_margin(dataset, params: ModelParams) -> float:
    """Smallest distance of any ReLU / LeakyReLU input from its kink."""
    cache = forward(dataset, params, "eval")
    margins = [np.abs(p).min() for p in cache.pre_activations]
    if params.variant != "no-attention" and dataset.num_modalities > 1:
        margins.append(np.abs(cache.attn_logits).min())
    return float(min(margins))


def perturb_off_kinks(dataset, params: ModelParams, rng, margin: float = 1e-4, scale: float = 1e-3, tries: int = 100):
    """Jitter params by ``scale`` until every kink input is at least ``margin`` away."""
    for _ in range(tries):
        if kink_margin(dataset, params) >= margin:
            return params
        params = params.with_tensors([t + rng.uniform(-scale, scale, t.shape) for t in params.tensors()])
    raise RuntimeError("could not move parameters away from activation kinks")


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: ModelParams, lr: float = 0.01, **hyper) -> "AdamState":
        zeros = [np.zeros_like(t) for t in params.tensors()]
        return cls(zeros, [z.copy() for z in zeros], 0, lr, **hyper)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState):
    ps, gs = params.tensors(), grads.tensors()
    if len(ps) != len(gs) or any(p.shape != g.shape for p, g in zip(ps, gs)):
        raise ShapeError("gradient layout does not match parameters")
    if len(state.first_moment) != len(ps):
        raise ShapeError("optimizer state does not match parameters")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(ps, gs, state.first_moment, state.second_moment):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return params.with_tensors(new_p), replace(state, first_moment=new_m, second_moment=new_v, step_count=t)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 2000
    min_epochs: int = 200
    patience: int = 30
    learning_rate: float = 0.01
    hidden_width: int = 64
    dropout_rate: float = 0.5
    seed: int = 0
    min_delta: float = 1e-6

    def __post_init__(self):
        if not 1 <= self.min_epochs <= self.max_epochs:
            raise ValueError("need 1 <= min_epochs <= max_epochs")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.hidden_width < 1 or self.learning_rate <= 0:
            raise ValueError("hidden_width and learning_rate must be positive")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_macro_f1: float
    train_accuracy: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_at_epoch: int = 0


def train(dataset: MultiModalDataset, config: TrainConfig, variant: str = "full"):
    """Full-batch transductive training with validation-loss early stopping.

    Early stopping may fire only once ``min_epochs`` have run and ``patience``
    epochs have passed without improvement. Returns the parameters from the
    best validation epoch together with the history.
    """
    masks = dataset.masks
    if masks.train.size == 0 or masks.val.size == 0:
        raise ValueError("training needs non-empty train and validation masks")
    params = init_params(dataset.feature_dims, config.hidden_width, dataset.num_classes, config.seed, variant)
    state = AdamState.zeros_like(params, lr=config.learning_rate)
    rng = np.random.default_rng([config.seed, 1])

    history = TrainHistory()
    best_loss = np.inf
    best_params = params
    for epoch in range(1, config.max_epochs + 1):
        cache = forward(dataset, params, "train", rng, config.dropout_rate)
        train_loss, grads = backward(dataset, params, cache, masks.train)
        params, state = adam_step(params, grads, state)

        logits = forward(dataset, params, "eval").logits
        val_loss = masked_cross_entropy(logits, dataset.labels, masks.val)
        pred = predict(logits)
        val_f1 = classification_report(dataset.labels[masks.val], pred[masks.val], dataset.num_classes).macro_f1
        train_acc = float(np.mean(pred[masks.train] == dataset.labels[masks.train]))
        history.records.append(EpochRecord(epoch, train_loss, val_loss, val_f1, train_acc))

        if val_loss < best_loss - config.min_delta:
            best_loss, best_params, history.best_epoch = val_loss, params, epoch
        history.stopped_at_epoch = epoch
        if epoch >= config.min_epochs and epoch - history.best_epoch >= config.patience:
            break

    log.debug("stopped at epoch %d, best epoch %d", history.stopped_at_epoch, history.best_epoch)
    return best_params, history
