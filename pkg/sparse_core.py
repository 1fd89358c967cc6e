"""Sparse matrix storage with row and column access.

A matrix is kept twice: once in CSR form (row dots) and once in CSC form
(column scans and sampling). ``RowDotCache`` keeps every row product
<A_k, x> current while x changes a few coordinates at a time.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np
import scipy.io
from scipy import sparse

logger = logging.getLogger(__name__)

# full recomputation of cached dots after this many sparse updates
DEFAULT_REFRESH_PERIOD = 10_000


# ================= errors =================

class SparseMirrorError(Exception):
    """Base class for every error raised by this package."""


class MatrixFormatError(SparseMirrorError, ValueError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class IndexOutOfRangeError(SparseMirrorError, IndexError):
    pass


class ProblemError(SparseMirrorError, ValueError):
    pass


# ================= storage =================

class SparseOperator(Protocol):
    """What oracles, caches and trackers need from a matrix."""

    m: int
    n: int
    s_n: int
    s_m: int

    def row(self, k: int) -> tuple[np.ndarray, np.ndarray]: ...
    def col(self, j: int) -> tuple[np.ndarray, np.ndarray]: ...
    def row_dot(self, k: int, x: np.ndarray) -> float: ...
    def matvec(self, x: np.ndarray) -> np.ndarray: ...
    def rmatvec(self, y: np.ndarray) -> np.ndarray: ...
    def row_norms(self, kind: str) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class SparseMatrixDual:
    m: int
    n: int
    row_view: sparse.csr_matrix
    col_view: sparse.csc_matrix
    s_n: int
    s_m: int

    @classmethod
    def from_scipy(cls, matrix) -> "SparseMatrixDual":
        csr = sparse.csr_matrix(matrix, dtype=float)
        csr.eliminate_zeros()
        csr.sort_indices()
        csc = csr.tocsc()
        csc.sort_indices()
        m, n = csr.shape
        s_n = int(np.diff(csr.indptr).max()) if m else 0
        s_m = int(np.diff(csc.indptr).max()) if n else 0
        return cls(m, n, csr, csc, s_n, s_m)

    @property
    def shape(self):
        return self.m, self.n

    @property
    def nnz(self) -> int:
        return int(self.row_view.nnz)

    @property
    def T(self) -> "SparseMatrixDual":
        # transposing a CSC matrix yields CSR over the same buffers
        return SparseMatrixDual(self.n, self.m, self.col_view.T.tocsr(), self.row_view.T.tocsc(),
                                self.s_m, self.s_n)

    def _check_row(self, k):
        if not 0 <= k < self.m:
            raise IndexOutOfRangeError(f"row {k} out of range [0, {self.m})")

    def _check_col(self, j):
        if not 0 <= j < self.n:
            raise IndexOutOfRangeError(f"column {j} out of range [0, {self.n})")

    def row(self, k):
        self._check_row(k)
        a, b = self.row_view.indptr[k], self.row_view.indptr[k + 1]
        return self.row_view.indices[a:b], self.row_view.data[a:b]

    def col(self, j):
        self._check_col(j)
        a, b = self.col_view.indptr[j], self.col_view.indptr[j + 1]
        return self.col_view.indices[a:b], self.col_view.data[a:b]

    def row_dot(self, k, x):
        idx, vals = self.row(k)
        return float(np.dot(vals, x[idx]))

    def matvec(self, x):
        return self.row_view @ np.asarray(x, dtype=float)

    def rmatvec(self, y):
        return self.col_view.T @ np.asarray(y, dtype=float)

    def row_norms(self, kind):
        absolute = abs(self.row_view)
        if kind == "l1":
            return np.asarray(absolute.sum(axis=1)).ravel()
        if kind == "l2":
            return np.sqrt(np.asarray(absolute.multiply(absolute).sum(axis=1)).ravel())
        if kind == "linf":
            return absolute.max(axis=1).toarray().ravel() if self.m else np.zeros(0)
        raise ValueError(f"unknown norm {kind!r}")

    def triplets(self) -> list[tuple[int, int, float]]:
        coo = self.row_view.tocoo()
        return sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    def column_triplets(self) -> list[tuple[int, int, float]]:
        coo = self.col_view.tocoo()
        return sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))


def _merge_diagonal(indices, values, k, shift):
    pos = int(np.searchsorted(indices, k))
    if pos < len(indices) and indices[pos] == k:
        values = values.copy()
        values[pos] += shift
        if values[pos] == 0.0:
            return np.delete(indices, pos), np.delete(values, pos)
        return indices, values
    return np.insert(indices, pos, k), np.insert(values, pos, shift)


class IdentityShiftedView:
    """base + shift * I for a square base, never materialised.

    With base = P^T and shift = -1 this is the PageRank operator A = P^T - I.
    """

    def __init__(self, base: SparseMatrixDual, shift: float = -1.0):
        if base.m != base.n:
            raise ProblemError(f"identity shift needs a square matrix, got {base.m}x{base.n}")
        self.base = base
        self.shift = float(shift)
        self.m = self.n = base.m
        # upper bounds: the diagonal may add one entry per row and column
        self.s_n = base.s_n + 1
        self.s_m = base.s_m + 1

    @property
    def shape(self):
        return self.m, self.n

    @property
    def T(self) -> "IdentityShiftedView":
        return IdentityShiftedView(self.base.T, self.shift)

    def row(self, k):
        idx, vals = self.base.row(k)
        return _merge_diagonal(idx, vals, k, self.shift)

    def col(self, j):
        idx, vals = self.base.col(j)
        return _merge_diagonal(idx, vals, j, self.shift)

    def row_dot(self, k, x):
        return self.base.row_dot(k, x) + self.shift * float(x[k])

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        return self.base.matvec(x) + self.shift * x

    def rmatvec(self, y):
        y = np.asarray(y, dtype=float)
        return self.base.rmatvec(y) + self.shift * y

    def row_norms(self, kind):
        norms = np.empty(self.m)
        for k in range(self.m):
            _, vals = self.row(k)
            norms[k] = np.linalg.norm(vals, {"l1": 1, "l2": 2, "linf": np.inf}[kind]) if len(vals) else 0.0
        return norms


def build_from_triplets(triplets: Iterable[Sequence], m: int, n: int) -> SparseMatrixDual:
    """Build both views from (row, col, value) triplets; duplicates are rejected."""
    triplets = list(triplets)
    if m < 0 or n < 0:
        raise MatrixFormatError(f"negative shape {m}x{n}")
    if not triplets:
        return SparseMatrixDual.from_scipy(sparse.csr_matrix((m, n), dtype=float))

    rows = np.fromiter((t[0] for t in triplets), dtype=np.int64, count=len(triplets))
    cols = np.fromiter((t[1] for t in triplets), dtype=np.int64, count=len(triplets))
    vals = np.fromiter((t[2] for t in triplets), dtype=float, count=len(triplets))

    bad = np.flatnonzero((rows < 0) | (rows >= m) | (cols < 0) | (cols >= n))
    if bad.size:
        i = int(bad[0])
        raise MatrixFormatError(f"entry ({rows[i]}, {cols[i]}) out of range for {m}x{n} matrix",
                                index=(int(rows[i]), int(cols[i])))
    if not np.all(np.isfinite(vals)):
        i = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise MatrixFormatError(f"non-finite value at ({rows[i]}, {cols[i]})",
                                index=(int(rows[i]), int(cols[i])))

    keys = rows * n + cols
    order = np.argsort(keys, kind="stable")
    repeated = np.flatnonzero(np.diff(keys[order]) == 0)
    if repeated.size:
        i = int(order[repeated[0]])
        raise MatrixFormatError(f"duplicate entry at ({rows[i]}, {cols[i]})",
                                index=(int(rows[i]), int(cols[i])))

    keep = vals != 0.0
    coo = sparse.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(m, n))
    return SparseMatrixDual.from_scipy(coo)


def row_dot(matrix: SparseOperator, k: int, x: np.ndarray) -> float:
    if len(x) != matrix.n:
        raise IndexOutOfRangeError(f"vector of length {len(x)} for a matrix with {matrix.n} columns")
    return matrix.row_dot(k, x)


# ================= incremental row dots =================

class RowDotCache:
    """Cached <A_k, x> for every row, kept current under sparse changes of x.

    The cache owns its copy of x so it can refresh from scratch on its own.
    """

    def __init__(self, matrix: SparseOperator, x, refresh_period: int = DEFAULT_REFRESH_PERIOD):
        if refresh_period < 1:
            raise ValueError("refresh_period must be positive")
        self.matrix = matrix
        self.point = np.array(x, dtype=float)
        if self.point.shape != (matrix.n,):
            raise IndexOutOfRangeError(f"vector of length {len(self.point)} for {matrix.n} columns")
        self.values = matrix.matvec(self.point)
        self.refresh_period = refresh_period
        self.updates_since_refresh = 0
        self.refresh_count = 0
        self.touched_rows = 0

    def refresh(self):
        self.values = self.matrix.matvec(self.point)
        self.updates_since_refresh = 0
        self.refresh_count += 1
        logger.debug("row dot cache refreshed (%d)", self.refresh_count)

    def reset(self, x):
        self.point = np.array(x, dtype=float)
        self.refresh()

    def apply(self, j, delta):
        return apply_sparse_delta(self, self.matrix, j, delta)


def apply_sparse_delta(cache: RowDotCache, matrix: SparseOperator, j: int, delta: float):
    """x_j += delta; update the rows of column j and return [(k, <A_k, x>)]."""
    rows, vals = matrix.col(j)
    cache.point[j] += delta
    cache.values[rows] += vals * delta
    cache.touched_rows += len(rows)
    cache.updates_since_refresh += 1
    if cache.updates_since_refresh >= cache.refresh_period:
        cache.refresh()
    return list(zip(rows.tolist(), cache.values[rows].tolist()))


# ================= Matrix Market =================

def read_matrix_market(path) -> SparseMatrixDual:
    """Read a 'coordinate real general' Matrix Market file."""
    try:
        _, _, _, fmt, field, symmetry = scipy.io.mminfo(path)
    except (ValueError, IndexError) as e:
        raise MatrixFormatError(f"{path}: malformed Matrix Market header ({e})") from e
    if fmt != "coordinate" or field not in ("real", "integer") or symmetry != "general":
        raise MatrixFormatError(f"{path}: expected 'coordinate real general', got '{fmt} {field} {symmetry}'")
    try:
        coo = sparse.coo_matrix(scipy.io.mmread(path))
    except (ValueError, IndexError) as e:
        raise MatrixFormatError(f"{path}: malformed Matrix Market body ({e})") from e
    m, n = coo.shape
    triplets = zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())
    try:
        return build_from_triplets(triplets, m, n)
    except MatrixFormatError as e:
        raise MatrixFormatError(f"{path}: {e}", index=e.index) from e


def read_vector(path) -> np.ndarray:
    """Read a dense vector stored as a Matrix Market array (or coordinate) file."""
    try:
        data = scipy.io.mmread(path)
    except (ValueError, IndexError) as e:
        raise MatrixFormatError(f"{path}: malformed Matrix Market file ({e})") from e
    if sparse.issparse(data):
        data = data.toarray()
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or min(data.shape) != 1:
        raise MatrixFormatError(f"{path}: expected a vector, got shape {data.shape}")
    return data.ravel()


def write_matrix_market(path, matrix, comment=""):
    if isinstance(matrix, SparseMatrixDual):
        scipy.io.mmwrite(path, matrix.row_view.tocoo(), comment=comment, field="real")
    else:
        scipy.io.mmwrite(path, np.asarray(matrix, dtype=float).reshape(-1, 1), comment=comment, field="real")
