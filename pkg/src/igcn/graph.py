"""Cosine-similarity networks with a degree-controlled edge threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import SparseAdjacency, add_self_loops, as_matrix


@dataclass(frozen=True)
class ThresholdReport:
    epsilon: float
    achieved_avg_degree: float
    requested_k: float
    num_edges: int  # undirected, excluding self loops


def cosine_similarity_matrix(x) -> np.ndarray:
    """Pairwise cosine similarity with a zero diagonal.

    Rows with zero norm have similarity 0 to every other row. The result is
    exactly symmetric and clipped to [-1, 1].
    """
    x = as_matrix(x, "features")
    m = x.shape[0]
    if m < 2:
        raise ValueError("need at least two rows to build a similarity matrix")
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = x / safe[:, None]
    unit[norms == 0] = 0.0
    upper = np.triu(np.clip(unit @ unit.T, -1.0, 1.0), k=1)
    return upper + upper.T


def _check_k(m: int, k: float) -> None:
    if not (0 < k <= m - 1):
        raise ValueError(f"k must lie in (0, {m - 1}] for {m} nodes, got {k}")


def select_threshold(s: np.ndarray, k: float) -> ThresholdReport:
    """Largest threshold whose ordered-pair average degree reaches ``k``.

    Equivalent to taking the ceil(m*k)-th largest off-diagonal similarity
    (counting both orientations of each pair). Every pair tied with that
    value is retained, so the achieved degree may exceed ``k``.
    """
    m = s.shape[0]
    _check_k(m, k)
    off = s[~np.eye(m, dtype=bool)]
    ranked = np.sort(off)[::-1]
    # guard m*k landing a hair above an integer through rounding
    need = max(1, math.ceil(m * k - 1e-9))
    epsilon = float(ranked[need - 1])
    count = int(np.count_nonzero(off >= epsilon))
    return ThresholdReport(epsilon, count / m, float(k), count // 2)


def threshold_adjacency(s: np.ndarray, epsilon: float) -> SparseAdjacency:
    """Binary adjacency keeping pairs ``q != w`` with similarity >= epsilon."""
    m = s.shape[0]
    keep = (s >= epsilon) & ~np.eye(m, dtype=bool)
    rows, cols = np.nonzero(keep)
    return SparseAdjacency.from_edges(m, rows, cols)


def build_similarity_network(x, k: float, *, self_loops: bool = True):
    """Threshold the cosine-similarity graph of ``x`` to average degree ``k``.

    Returns ``(adjacency, report)``. With ``self_loops`` (the default) the
    identity is added; callers still have to run ``sym_normalize``.
    """
    s = cosine_similarity_matrix(x)
    report = select_threshold(s, k)
    adj = threshold_adjacency(s, report.epsilon)
    return (add_self_loops(adj) if self_loops else adj), report
