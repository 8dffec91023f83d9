"""File formats: Matrix Market for matrices, one-value-per-line text vectors,
one-index-per-line column streams for coupled runs.

Floats are written with 17 significant digits so a round-trip reproduces the
exact double, and repeated writes of the same data are byte-identical.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .linalg import DenseMatrix, ProblemMatrix, SparseMatrix, build_problem_matrix

_FLOAT_FMT = "%.17g"


def _atomic_write(path, write_fn) -> None:
    """Write via a temp file + rename so failures never leave partial output."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", encoding="ascii", newline="\n") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def save_matrix(path, matrix) -> None:
    """Write a matrix in Matrix Market format (array if dense, coordinate if sparse)."""
    if isinstance(matrix, ProblemMatrix):
        matrix = matrix.storage
    if isinstance(matrix, DenseMatrix):
        payload = matrix.values
    elif isinstance(matrix, SparseMatrix):
        payload = matrix.csc
    else:
        raise TypeError(f"unsupported matrix type: {type(matrix).__name__}")
    path = Path(path)
    # mmwrite appends ".mtx" unless the target already ends with it
    tmp = path.with_name(path.name + ".tmp.mtx")
    try:
        scipy.io.mmwrite(str(tmp), payload, precision=17)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def load_matrix(path):
    """Read a Matrix Market file into DenseMatrix (array) or SparseMatrix (coordinate)."""
    data = scipy.io.mmread(str(path))
    if sp.issparse(data):
        return SparseMatrix(data)
    return DenseMatrix(np.asarray(data))


def load_problem_matrix(path) -> ProblemMatrix:
    return build_problem_matrix(load_matrix(path))


def save_vector(path, vector) -> None:
    v = np.asarray(vector, dtype=np.float64)

    def write(fh):
        for value in v:
            fh.write(_FLOAT_FMT % value)
            fh.write("\n")

    _atomic_write(path, write)


def load_vector(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        values = [float(line) for line in fh if line.strip()]
    return np.asarray(values, dtype=np.float64)


def save_index_stream(path, indices) -> None:
    idx = np.asarray(indices, dtype=np.int64)

    def write(fh):
        for value in idx:
            fh.write(str(int(value)))
            fh.write("\n")

    _atomic_write(path, write)


def load_index_stream(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        values = [int(line) for line in fh if line.strip()]
    return np.asarray(values, dtype=np.int64)
