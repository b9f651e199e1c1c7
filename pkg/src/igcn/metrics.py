"""Classification metrics and stratified train/validation/test splits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import SplitMask


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows indexed by true class and columns by predicted class."""

    counts: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    macro_f1: float
    weighted_f1: float
    mcc: float

    FIELDS = ("accuracy", "macro_f1", "weighted_f1", "mcc")

    def as_tuple(self):
        return tuple(getattr(self, f) for f in self.FIELDS)


def confusion(y_true, y_pred, num_classes: int) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.int64).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    if y_true.size == 0:
        raise ValueError("cannot tabulate an empty prediction set")
    both = np.concatenate([y_true, y_pred])
    if both.min() < 0 or both.max() >= num_classes:
        raise ValueError(f"label outside [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


def metrics(conf: ConfusionMatrix) -> MetricsReport:
    counts = conf.counts.astype(np.float64)
    s = counts.sum()
    if s < 1:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(counts)
    predicted = counts.sum(axis=0)
    actual = counts.sum(axis=1)

    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(actual > 0, tp / actual, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)

    trace = tp.sum()
    cov_pred = s * s - np.dot(predicted, predicted)
    cov_true = s * s - np.dot(actual, actual)
    if cov_pred == 0 or cov_true == 0:
        mcc = 0.0
    else:
        mcc = (trace * s - np.dot(predicted, actual)) / math.sqrt(cov_pred * cov_true)

    return MetricsReport(
        accuracy=float(trace / s),
        macro_f1=float(f1.mean()),
        weighted_f1=float(np.dot(f1, actual) / s),
        mcc=float(mcc),
    )


def classification_report(y_true, y_pred, num_classes: int) -> MetricsReport:
    return metrics(confusion(y_true, y_pred, num_classes))


def largest_remainder(total: int, ratios) -> list[int]:
    """Apportion ``total`` items by ``ratios`` (Hamilton's method).

    Ties between equal remainders go to the earlier ratio.
    """
    quotas = [total * r for r in ratios]
    sizes = [math.floor(q) for q in quotas]
    left = total - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:left]:
        sizes[i] += 1
    return sizes


def stratified_split(labels, ratios=(0.6, 0.2, 0.2), seed: int = 0) -> SplitMask:
    """Per-class seeded shuffle cut into train/validation/test."""
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError("ratios must be three non-negative numbers summing to 1")
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 3:
            raise ValueError(f"class {cls} has only {idx.size} samples; need at least 3")
        idx = rng.permutation(idx)
        a, b, _ = largest_remainder(idx.size, ratios)
        parts[0].append(idx[:a])
        parts[1].append(idx[a : a + b])
        parts[2].append(idx[a + b :])
    train, val, test = (np.sort(np.concatenate(p)) for p in parts)
    return SplitMask(train, val, test)
