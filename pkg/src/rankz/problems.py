"""Gaussian test ensembles and the pseudoinverse reference oracle.

Three matrix classes are generated, matching the benchmark protocols: dense
standard-normal, sparse standard-normal with a given density, and
rank-deficient matrices obtained by truncating the SVD of a dense Gaussian
matrix to its r largest singular values.

All randomness comes from the seeded :class:`~rankz.sampling.Rng` via an
explicit Box-Muller transform, so ensembles are reproducible bit-for-bit
across platforms.  The SVD-based oracle (minimum-norm least-squares solution,
optimal residual, scaled condition number) lives only here; the solver
kernels never depend on it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import io as rio
from .linalg import DenseMatrix, ProblemMatrix, SparseMatrix, build_problem_matrix, norm2
from .sampling import Rng

PINV_CUTOFF = 1e-12  # relative singular-value cutoff for the pseudoinverse
KINDS = ("dense", "sparse", "rank_deficient")

_ORACLE_REL_TOL = 1e-8


def gaussians(rng: Rng, count: int) -> np.ndarray:
    """`count` standard normal deviates via Box-Muller.

    Consumes 2*ceil(count/2) uniforms (u1, u2 per pair) and returns
    sqrt(-2 ln(1-u1)) * (cos, sin)(2 pi u2); the trailing deviate of the last
    pair is dropped for odd counts.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    pairs = (count + 1) // 2
    u = rng.random_array(2 * pairs)
    radius = np.sqrt(-2.0 * np.log1p(-u[0::2]))
    angle = 2.0 * np.pi * u[1::2]
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return z[:count]


@dataclass
class LsProblem:
    """A least-squares instance, optionally with its oracle solution.

    x_o is the minimum-norm least-squares solution, r_o = b - A x_o the
    optimal residual.  rank_hint records the target rank of generated
    rank-deficient instances.
    """

    A: ProblemMatrix
    b: np.ndarray
    x_o: Optional[np.ndarray] = None
    r_o: Optional[np.ndarray] = None
    rank_hint: Optional[int] = None

    def __post_init__(self):
        if self.b.size != self.A.m:
            raise ValueError("right-hand side length does not match matrix rows")
        if self.x_o is not None and self.r_o is not None:
            from .linalg import mat_t_vec

            gap = norm2(mat_t_vec(self.A, self.r_o))
            if gap > _ORACLE_REL_TOL * self.A.frob * max(norm2(self.b), 1e-300):
                raise ValueError("oracle residual is not orthogonal to range(A)")


@dataclass(frozen=True)
class EnsembleSpec:
    """Parameters of one matrix class for ensemble experiments."""

    kind: str
    m: int
    n: int
    density: Optional[float] = None
    r: Optional[int] = None
    trials: int = 1
    base_seed: int = 0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.m < 1 or self.n < 1:
            raise ValueError("dimensions must be at least 1")
        if self.kind == "sparse":
            if self.density is None or not 0.0 < self.density <= 1.0:
                raise ValueError("sparse ensembles need a density in (0, 1]")
        if self.kind == "rank_deficient":
            if self.r is None or not 1 <= self.r <= min(self.m, self.n):
                raise ValueError("rank must satisfy 1 <= r <= min(m, n)")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


def gen_dense(m: int, n: int, rng: Rng) -> LsProblem:
    """Dense standard-normal matrix and right-hand side, oracle attached.

    Entries are drawn in column-major order (m*n for A, then m for b).
    """
    entries = gaussians(rng, m * n).reshape((m, n), order="F")
    b = gaussians(rng, m)
    A = build_problem_matrix(DenseMatrix(entries))
    x_o, r_o = oracle_solution(A, b)
    return LsProblem(A=A, b=b, x_o=x_o, r_o=r_o)


def gen_sparse(m: int, n: int, density: float, rng: Rng) -> LsProblem:
    """Sparse matrix: each entry independently nonzero with the given
    probability, nonzero values standard normal.

    Consumes m*n uniforms for the mask (column-major), then one normal per
    nonzero (column-major order of the kept positions), then m normals for b.
    """
    if not 0.0 < density <= 1.0:
        raise ValueError("density must be in (0, 1]")
    mask = rng.random_array(m * n) < density  # column-major positions
    positions = np.flatnonzero(mask)
    if positions.size == 0:
        raise ValueError("generated matrix has no nonzeros; increase density")
    rows = positions % m
    cols = positions // m
    values = gaussians(rng, positions.size)
    b = gaussians(rng, m)
    storage = SparseMatrix(sp.coo_matrix((values, (rows, cols)), shape=(m, n)))
    A = build_problem_matrix(storage)
    x_o, r_o = oracle_solution(A, b)
    return LsProblem(A=A, b=b, x_o=x_o, r_o=r_o)


def gen_rank_deficient(m: int, n: int, r: int, rng: Rng) -> LsProblem:
    """Dense Gaussian matrix truncated to its r largest singular values.

    Draws the dense matrix and b first (same stream layout as gen_dense),
    then recomposes A = U diag(s_1..s_r, 0, ...) V^T.
    """
    if not 1 <= r <= min(m, n):
        raise ValueError("rank must satisfy 1 <= r <= min(m, n)")
    base = gaussians(rng, m * n).reshape((m, n), order="F")
    b = gaussians(rng, m)
    u, s, vt = np.linalg.svd(base, full_matrices=False)
    s[r:] = 0.0
    A = build_problem_matrix(DenseMatrix((u * s) @ vt))
    x_o, r_o = oracle_solution(A, b)
    return LsProblem(A=A, b=b, x_o=x_o, r_o=r_o, rank_hint=r)


def generate_problem(spec: EnsembleSpec, rng: Rng) -> LsProblem:
    """Generate one instance of the given ensemble from an explicit stream."""
    spec.validate()
    if spec.kind == "dense":
        return gen_dense(spec.m, spec.n, rng)
    if spec.kind == "sparse":
        return gen_sparse(spec.m, spec.n, spec.density, rng)
    return gen_rank_deficient(spec.m, spec.n, spec.r, rng)


def _dense_of(A) -> np.ndarray:
    if isinstance(A, ProblemMatrix):
        return A.to_dense()
    if isinstance(A, (DenseMatrix, SparseMatrix)):
        return A.to_dense()
    return np.asarray(A, dtype=np.float64)


def oracle_solution(A, b) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-norm least-squares solution and residual via full SVD.

    Singular values below PINV_CUTOFF * s_max are treated as zero, so the
    solution lies in range(A^T) and is the pseudoinverse solution.
    """
    dense = _dense_of(A)
    b = np.asarray(b, dtype=np.float64)
    u, s, vt = np.linalg.svd(dense, full_matrices=False)
    keep = s > PINV_CUTOFF * s[0]
    coeff = (u.T[keep] @ b) / s[keep]
    x_o = vt[keep].T @ coeff
    r_o = b - dense @ x_o
    return x_o, r_o


def pinv_norm(A) -> float:
    """Spectral norm of the pseudoinverse: 1 / (smallest kept singular value)."""
    s = np.linalg.svd(_dense_of(A), compute_uv=False)
    kept = s[s > PINV_CUTOFF * s[0]]
    return 1.0 / float(kept[-1])


def kappa_f(A) -> float:
    """Scaled condition number ||A||_F * ||A^dagger||."""
    dense = _dense_of(A)
    frob = float(np.linalg.norm(dense))
    return frob * pinv_norm(dense)


# ---------------------------------------------------------------------------
# On-disk problem bundles: matrix (.mtx), vectors (.txt), metadata (.json).
# ---------------------------------------------------------------------------


def save_problem(prefix, problem: LsProblem, meta: Optional[dict] = None) -> list[Path]:
    """Write matrix + vectors + metadata sidecar under a path prefix."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    written = []

    matrix_path = prefix.with_suffix(".mtx")
    rio.save_matrix(matrix_path, problem.A)
    written.append(matrix_path)

    b_path = Path(str(prefix) + ".b.txt")
    rio.save_vector(b_path, problem.b)
    written.append(b_path)

    sidecar = {
        "m": problem.A.m,
        "n": problem.A.n,
        "sparse": problem.A.is_sparse,
        "nnz": problem.A.nnz,
        "rank_hint": problem.rank_hint,
    }
    if meta:
        sidecar.update(meta)
    for name, vec in (("x_o", problem.x_o), ("r_o", problem.r_o)):
        if vec is not None:
            vec_path = Path(f"{prefix}.{name}.txt")
            rio.save_vector(vec_path, vec)
            written.append(vec_path)
            sidecar[f"has_{name}"] = True

    json_path = prefix.with_suffix(".json")
    rio._atomic_write(
        json_path, lambda fh: fh.write(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")
    )
    written.append(json_path)
    return written


def load_problem(prefix) -> LsProblem:
    """Read a problem bundle written by :func:`save_problem`."""
    prefix = Path(prefix)
    A = build_problem_matrix(rio.load_matrix(prefix.with_suffix(".mtx")))
    b = rio.load_vector(Path(str(prefix) + ".b.txt"))
    x_o = r_o = None
    x_path = Path(str(prefix) + ".x_o.txt")
    r_path = Path(str(prefix) + ".r_o.txt")
    if x_path.exists():
        x_o = rio.load_vector(x_path)
    if r_path.exists():
        r_o = rio.load_vector(r_path)
    rank_hint = None
    json_path = prefix.with_suffix(".json")
    if json_path.exists():
        with open(json_path, "r", encoding="ascii") as fh:
            rank_hint = json.load(fh).get("rank_hint")
    return LsProblem(A=A, b=b, x_o=x_o, r_o=r_o, rank_hint=rank_hint)
