"""Matrix/vector substrate for the row- and column-action solvers.

Dense matrices are stored column-major so column views are contiguous (the
coordinate-descent kernels walk columns).  Sparse matrices keep the same
nonzeros in both column-compressed and row-compressed form, paying double
memory for O(nnz) access along either axis.  Matrices are immutable once
built; squared column/row norms and the squared Frobenius norm are cached at
construction because the samplers and stopping rules read them constantly.

All kernels can charge their exact multiply-add count to a caller-supplied
:class:`FlopCounter` (one add, subtract, multiply or divide = 1; a dot over a
k-nonzero view = 2k).
"""

from __future__ import annotations

from typing import NamedTuple, Optional, Union

import numpy as np
import scipy.sparse as sp

_REL_NORM_TOL = 1e-12


class FlopCounter:
    """Mutable multiply-add counter shared by the kernels of one run."""

    __slots__ = ("count",)

    def __init__(self, count: int = 0):
        self.count = int(count)

    def add(self, n: int) -> None:
        self.count += n

    def __repr__(self) -> str:
        return f"FlopCounter({self.count})"


class VectorView(NamedTuple):
    """A row or column of a matrix, without copying the matrix.

    ``indices is None`` means the view spans the whole target vector (dense
    case); otherwise ``values[k]`` sits at position ``indices[k]``.
    """

    values: np.ndarray
    indices: Optional[np.ndarray]

    @property
    def nnz(self) -> int:
        return self.values.size


def as_vector(values) -> np.ndarray:
    """Coerce to a finite, contiguous float64 vector."""
    v = np.ascontiguousarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("expected a 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


class DenseMatrix:
    """Dense float64 storage in column-major order."""

    __slots__ = ("values", "m", "n")

    def __init__(self, values):
        arr = np.asfortranarray(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("dense matrix must be 2-D")
        m, n = arr.shape
        if m < 1 or n < 1:
            raise ValueError("matrix dimensions must be at least 1x1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("matrix has non-finite entries")
        self.values = arr
        self.m = m
        self.n = n

    @property
    def nnz(self) -> int:
        return self.m * self.n

    def column(self, j: int) -> VectorView:
        if not 0 <= j < self.n:
            raise IndexError(f"column index {j} out of range for n={self.n}")
        return VectorView(self.values[:, j], None)

    def row(self, i: int) -> VectorView:
        if not 0 <= i < self.m:
            raise IndexError(f"row index {i} out of range for m={self.m}")
        return VectorView(self.values[i, :], None)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.values @ x

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        return self.values.T @ y

    def to_dense(self) -> np.ndarray:
        return self.values.copy()


class SparseMatrix:
    """Sparse float64 storage kept in both CSC and CSR form.

    Both compressed forms describe the same nonzero set with strictly
    increasing indices per column/row and no explicitly stored zeros.
    """

    __slots__ = ("csc", "csr", "m", "n")

    def __init__(self, matrix):
        csc = sp.csc_matrix(matrix, dtype=np.float64, copy=True)
        csc.sum_duplicates()
        csc.eliminate_zeros()
        csc.sort_indices()
        if csc.shape[0] < 1 or csc.shape[1] < 1:
            raise ValueError("matrix dimensions must be at least 1x1")
        if not np.all(np.isfinite(csc.data)):
            raise ValueError("matrix has non-finite entries")
        csr = csc.tocsr()
        csr.sort_indices()
        self.csc = csc
        self.csr = csr
        self.m, self.n = csc.shape

    @classmethod
    def from_coo(cls, m: int, n: int, rows, cols, values) -> "SparseMatrix":
        return cls(sp.coo_matrix((values, (rows, cols)), shape=(m, n)))

    @property
    def nnz(self) -> int:
        return self.csc.nnz

    def column(self, j: int) -> VectorView:
        if not 0 <= j < self.n:
            raise IndexError(f"column index {j} out of range for n={self.n}")
        lo, hi = self.csc.indptr[j], self.csc.indptr[j + 1]
        return VectorView(self.csc.data[lo:hi], self.csc.indices[lo:hi])

    def row(self, i: int) -> VectorView:
        if not 0 <= i < self.m:
            raise IndexError(f"row index {i} out of range for m={self.m}")
        lo, hi = self.csr.indptr[i], self.csr.indptr[i + 1]
        return VectorView(self.csr.data[lo:hi], self.csr.indices[lo:hi])

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.csr @ x

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        return self.csr.T @ y

    def to_dense(self) -> np.ndarray:
        return self.csc.toarray()


Storage = Union[DenseMatrix, SparseMatrix]


class ProblemMatrix:
    """A matrix plus the cached squared norms the algorithms sample from.

    Immutable after construction and safe to share across runs.  Use
    :func:`build_problem_matrix` rather than the constructor.
    """

    __slots__ = ("storage", "col_sq_norms", "row_sq_norms", "frob_sq")

    def __init__(self, storage: Storage, col_sq_norms, row_sq_norms, frob_sq):
        self.storage = storage
        self.col_sq_norms = col_sq_norms
        self.row_sq_norms = row_sq_norms
        self.frob_sq = frob_sq

    @property
    def m(self) -> int:
        return self.storage.m

    @property
    def n(self) -> int:
        return self.storage.n

    @property
    def nnz(self) -> int:
        return self.storage.nnz

    @property
    def is_sparse(self) -> bool:
        return isinstance(self.storage, SparseMatrix)

    @property
    def frob(self) -> float:
        return float(np.sqrt(self.frob_sq))

    def column(self, j: int) -> VectorView:
        return self.storage.column(j)

    def row(self, i: int) -> VectorView:
        return self.storage.row(i)

    def to_dense(self) -> np.ndarray:
        return self.storage.to_dense()


def build_problem_matrix(storage) -> ProblemMatrix:
    """Wrap storage with cached column/row squared norms and ||A||_F^2.

    Accepts a :class:`DenseMatrix`, :class:`SparseMatrix`, a 2-D ndarray
    (wrapped dense) or any scipy sparse matrix (wrapped dual-compressed).
    """
    if isinstance(storage, np.ndarray):
        storage = DenseMatrix(storage)
    elif sp.issparse(storage):
        storage = SparseMatrix(storage)
    elif not isinstance(storage, (DenseMatrix, SparseMatrix)):
        raise TypeError(f"unsupported storage type: {type(storage).__name__}")

    if isinstance(storage, DenseMatrix):
        sq = storage.values * storage.values
        col_sq = np.ascontiguousarray(sq.sum(axis=0))
        row_sq = np.ascontiguousarray(sq.sum(axis=1))
    else:
        csc, csr = storage.csc, storage.csr
        col_sq = np.add.reduceat(
            np.concatenate((csc.data * csc.data, [0.0])), csc.indptr[:-1]
        )
        col_sq[np.diff(csc.indptr) == 0] = 0.0
        row_sq = np.add.reduceat(
            np.concatenate((csr.data * csr.data, [0.0])), csr.indptr[:-1]
        )
        row_sq[np.diff(csr.indptr) == 0] = 0.0

    frob_sq = float(col_sq.sum())
    row_total = float(row_sq.sum())
    if abs(frob_sq - row_total) > _REL_NORM_TOL * max(frob_sq, row_total):
        raise ValueError("column and row norm totals disagree beyond tolerance")
    return ProblemMatrix(storage, col_sq, row_sq, frob_sq)


# ---------------------------------------------------------------------------
# Counted kernels (BLAS-1/2 semantics).
# ---------------------------------------------------------------------------


def dot(u: np.ndarray, view: VectorView, flops: Optional[FlopCounter] = None) -> float:
    """<u, view>; charges 2*nnz(view)."""
    vals = view.values
    if view.indices is None:
        if vals.size != u.size:
            raise ValueError("dot: dimension mismatch")
        out = float(vals @ u)
    else:
        out = float(vals @ u[view.indices])
    if flops is not None:
        flops.add(2 * vals.size)
    return out


def axpy(alpha: float, view: VectorView, u: np.ndarray, flops: Optional[FlopCounter] = None) -> None:
    """u += alpha * view, touching only the view's nonzero positions; 2*nnz."""
    vals = view.values
    if view.indices is None:
        if vals.size != u.size:
            raise ValueError("axpy: dimension mismatch")
        u += alpha * vals
    else:
        u[view.indices] += alpha * vals
    if flops is not None:
        flops.add(2 * vals.size)


def norm2(u: np.ndarray, flops: Optional[FlopCounter] = None) -> float:
    """Euclidean norm; charges 2*len(u)."""
    if flops is not None:
        flops.add(2 * u.size)
    return float(np.linalg.norm(u))


def mat_vec(A: ProblemMatrix, x: np.ndarray, flops: Optional[FlopCounter] = None) -> np.ndarray:
    """A @ x; charges 2*nnz(A)."""
    if x.size != A.n:
        raise ValueError(f"mat_vec: x has length {x.size}, expected {A.n}")
    if flops is not None:
        flops.add(2 * A.nnz)
    return A.storage.matvec(x)


def mat_t_vec(A: ProblemMatrix, y: np.ndarray, flops: Optional[FlopCounter] = None) -> np.ndarray:
    """A.T @ y; charges 2*nnz(A)."""
    if y.size != A.m:
        raise ValueError(f"mat_t_vec: y has length {y.size}, expected {A.m}")
    if flops is not None:
        flops.add(2 * A.nnz)
    return A.storage.rmatvec(y)
