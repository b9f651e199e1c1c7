"""Dense kernels and a compressed-sparse-row symmetric adjacency.

Dense matrices are plain 2-D ``float64`` numpy arrays. Every public dense
kernel validates shapes and refuses to hand back non-finite values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    """Operands do not conform."""


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce ``x`` to a finite 2-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return _finite(arr, name)


def _finite(arr: np.ndarray, name: str = "result") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{name} contains NaN or Inf")
    return arr


# ---------------------------------------------------------------------------
# Sparse adjacency
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SparseAdjacency:
    """Symmetric weighted graph over ``num_nodes`` nodes in CSR layout.

    Column indices are sorted within each row and no (row, col) pair repeats.
    Use :meth:`from_edges` rather than the constructor unless the arrays are
    already canonical.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for arr in (self.row_offsets, self.col_indices, self.values):
            arr.setflags(write=False)

    @classmethod
    def from_edges(cls, num_nodes: int, rows, cols, values=None, *, check_symmetric: bool = True):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        if values is None:
            values = np.ones(rows.shape[0])
        values = np.asarray(values, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == values.shape):
            raise ShapeError("rows, cols and values must have equal length")
        if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= num_nodes or cols.max() >= num_nodes):
            raise ValueError("edge endpoint outside [0, num_nodes)")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("adjacency values must be finite and non-negative")

        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if rows.size > 1:
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if np.any(dup):
                raise ValueError("duplicate (row, col) entry in adjacency")
        offsets = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=num_nodes), out=offsets[1:])
        adj = cls(int(num_nodes), offsets, cols, values)
        if check_symmetric and not adj.is_symmetric():
            raise ValueError("adjacency is not symmetric")
        return adj

    @classmethod
    def identity(cls, num_nodes: int) -> "SparseAdjacency":
        idx = np.arange(num_nodes)
        return cls.from_edges(num_nodes, idx, idx)

    @property
    def nnz(self) -> int:
        return int(self.col_indices.shape[0])

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_nodes), np.diff(self.row_offsets))

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets),
            shape=(self.num_nodes, self.num_nodes),
        )

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.num_nodes, self.num_nodes))
        out[self.row_ids(), self.col_indices] = self.values
        return out

    def has_diagonal(self) -> bool:
        return bool(np.any(self.row_ids() == self.col_indices))

    def off_diagonal_count(self) -> int:
        return int(np.count_nonzero(self.row_ids() != self.col_indices))

    def is_symmetric(self) -> bool:
        rows, cols = self.row_ids(), self.col_indices
        # entries already sorted by (row, col); re-sort the transpose the same way
        order = np.lexsort((rows, cols))
        return (
            np.array_equal(cols[order], rows)
            and np.array_equal(rows[order], cols)
            and np.array_equal(self.values[order], self.values)
        )

    def edge_set(self) -> set[tuple[int, int]]:
        """Undirected off-diagonal edges as ``(lo, hi)`` pairs."""
        rows = self.row_ids()
        return {(int(r), int(c)) for r, c in zip(rows, self.col_indices) if r < c}

    def __eq__(self, other):
        if not isinstance(other, SparseAdjacency):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )


def add_self_loops(adj: SparseAdjacency) -> SparseAdjacency:
    """Return ``adj + I``; the input must not already carry diagonal entries."""
    if adj.has_diagonal():
        raise ValueError("adjacency already contains a diagonal entry")
    n = adj.num_nodes
    diag = np.arange(n)
    rows = np.concatenate([adj.row_ids(), diag])
    cols = np.concatenate([adj.col_indices, diag])
    vals = np.concatenate([adj.values, np.ones(n)])
    return SparseAdjacency.from_edges(n, rows, cols, vals, check_symmetric=False)


def sym_normalize(adj: SparseAdjacency) -> SparseAdjacency:
    """Symmetric degree normalization ``D^-1/2 A D^-1/2`` with row-sum degrees."""
    rows = adj.row_ids()
    deg = np.bincount(rows, weights=adj.values, minlength=adj.num_nodes)
    if np.any(deg <= 0):
        raise ValueError("zero-degree node; add self loops before normalizing")
    cols = adj.col_indices
    # sqrt of the product (not product of sqrts) keeps paired entries bitwise equal
    vals = adj.values / np.sqrt(deg[rows] * deg[cols])
    return SparseAdjacency(adj.num_nodes, adj.row_offsets.copy(), cols.copy(), vals)


def spmm(adj: SparseAdjacency, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != adj.num_nodes:
        raise ShapeError(f"spmm: adjacency over {adj.num_nodes} nodes vs matrix {x.shape}")
    return _finite(np.asarray(adj.to_scipy() @ x), "spmm")


# ---------------------------------------------------------------------------
# Dense kernels
# ---------------------------------------------------------------------------


def matmul(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    return _finite(out, "matmul")


def add_bias_column(a, bias) -> np.ndarray:
    """Add a scalar or per-column bias row to every row of ``a``."""
    a = np.asarray(a, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64).reshape(-1)
    if bias.size not in (1, a.shape[1]):
        raise ShapeError(f"bias of size {bias.size} for matrix {a.shape}")
    return _finite(a + bias[None, :], "add_bias_column")


def relu(a) -> np.ndarray:
    return np.maximum(np.asarray(a, dtype=np.float64), 0.0)


def leaky_relu(a, slope: float = 0.2) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return np.where(a >= 0, a, slope * a)


def row_softmax(a) -> np.ndarray:
    a = as_matrix(a)
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def transpose(a) -> np.ndarray:
    return as_matrix(a).T.copy()


def hadamard_broadcast_column(matrix, column) -> np.ndarray:
    """Scale row ``n`` of ``matrix`` by ``column[n]``."""
    matrix = np.asarray(matrix, dtype=np.float64)
    column = np.asarray(column, dtype=np.float64).reshape(-1)
    if matrix.ndim != 2 or column.shape[0] != matrix.shape[0]:
        raise ShapeError(f"column of length {column.shape[0]} for matrix {matrix.shape}")
    return _finite(matrix * column[:, None], "hadamard_broadcast_column")
