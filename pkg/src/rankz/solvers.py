"""Randomized iterative solvers for linear least-squares.

Five algorithms share the same kernels and stopping machinery:

* ``cd``       -- coordinate descent: project the maintained residual off a
                  norm-weighted random column, update one coordinate of x.
* ``k``        -- Kaczmarz: project x onto the hyperplane of a norm-weighted
                  random row and its target value.
* ``ek``       -- extended Kaczmarz: each iteration does one cd step (residual
                  estimation) followed by one Kaczmarz step toward the
                  progressively de-noised system A x = b - r_cd.
* ``cd+k``     -- cd until its stopping rule holds, then Kaczmarz from zero on
                  the near-consistent system A x = b - r_cd.
* ``cd+ek+k``  -- cd with a looser staging tolerance, then ek until either
                  stopping rule fires, then (if needed) Kaczmarz warm-started
                  from the ek iterate.

Two stopping statistics are evaluated every ``check_every`` iterations
(default 8*min(m, n), including the instant before the first step):

* crit1 = ||A^T r_cd|| / (||A||_F^2 ||x||): the residual estimate is nearly
  orthogonal to the range of A;
* crit2 = ||b - r_cd - A x|| / (||A||_F ||x||): x nearly solves the
  de-noised system.

When ||x|| = 0 a criterion holds iff its numerator is exactly zero, which
keeps b = 0 and b orthogonal to range(A) well-defined.

Runs are deterministic given (problem, config): one seeded stream drives all
index draws, in step order (for ek: column draw then row draw each
iteration).  For coupled comparisons a pre-recorded column stream
(:class:`StepRecord`) replaces the column draws while row draws stay free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .linalg import FlopCounter, ProblemMatrix, axpy, dot, mat_t_vec, mat_vec, norm2
from .sampling import IndexSampler, Rng, build_sampler

_BLOCK = 8192  # max iterations advanced between bookkeeping events

PHASE_CD = "cd"
PHASE_EK = "ek"
PHASE_K = "k"


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances, budgets and reproducibility knobs for one run.

    eps_cd_hat is the staging tolerance of the cd phase in cd+ek+k; it
    defaults to 1e3 * eps_cd and must be >= eps_cd.  check_every defaults to
    8*min(m, n); trace_every defaults to check_every.  With
    stop_on_criteria=False the run ignores the stopping rules and consumes
    the full iteration budget (used for fixed-budget benchmark curves).
    """

    eps_cd: float = 1e-6
    eps_k: float = 1e-6
    eps_cd_hat: Optional[float] = None
    max_iters: int = 1_000_000
    check_every: Optional[int] = None
    trace_every: Optional[int] = None
    seed: int = 0
    stop_on_criteria: bool = True

    def validate(self) -> None:
        if not (self.eps_cd > 0.0 and self.eps_k > 0.0):
            raise ValueError("eps_cd and eps_k must be positive")
        if self.eps_cd_hat is not None and self.eps_cd_hat < self.eps_cd:
            raise ValueError("eps_cd_hat must be >= eps_cd")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        for name in ("check_every", "trace_every"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError(f"{name} must be >= 1")

    def resolve(self, m: int, n: int) -> "ResolvedConfig":
        self.validate()
        check_every = self.check_every or 8 * min(m, n)
        trace_every = self.trace_every or check_every
        eps_cd_hat = self.eps_cd_hat if self.eps_cd_hat is not None else 1e3 * self.eps_cd
        return ResolvedConfig(
            eps_cd=self.eps_cd,
            eps_k=self.eps_k,
            eps_cd_hat=eps_cd_hat,
            max_iters=self.max_iters,
            check_every=check_every,
            trace_every=trace_every,
            seed=self.seed,
            stop_on_criteria=self.stop_on_criteria,
        )


@dataclass(frozen=True)
class ResolvedConfig:
    eps_cd: float
    eps_k: float
    eps_cd_hat: float
    max_iters: int
    check_every: int
    trace_every: int
    seed: int
    stop_on_criteria: bool


@dataclass
class SolverState:
    """Live iterate bundle shared by the engine and step kernels.

    x is the solution iterate of the active phase (x_cd during cd, the
    extended-Kaczmarz solution during ek, the Kaczmarz iterate during k).
    r_cd/x_cd are the maintained residual estimate and cd solution, when the
    active phase maintains them.
    """

    x: np.ndarray
    x_cd: Optional[np.ndarray] = None
    r_cd: Optional[np.ndarray] = None
    k: int = 0
    flops: FlopCounter = field(default_factory=FlopCounter)
    converged: bool = False
    reason: str = ""


@dataclass(frozen=True)
class StepRecord:
    """A pre-drawn stream of column indices j_k, shared between coupled runs."""

    columns: np.ndarray

    def __len__(self) -> int:
        return self.columns.size


def record_column_stream(A: ProblemMatrix, rng: Rng, count: int) -> StepRecord:
    """Draw `count` column indices from A's norm-weighted distribution."""
    sampler = build_sampler(A.col_sq_norms)
    return StepRecord(np.asarray(sampler.draw_many(rng, count), dtype=np.int64))


class RunTrace:
    """Checkpoint log of one run, one row per recorded iteration count.

    Columns: k (global iteration), r_norm (||r_cd||; for a standalone
    Kaczmarz run with no residual estimate it is nan), crit1, crit2 (the two
    stopping statistics, evaluated with the active phase's iterate), rmse
    (||x - x_oracle|| / ||x_oracle|| when a reference solution is known,
    else nan), flops (cumulative iteration-kernel multiply-adds) and phase.
    """

    COLUMNS = ("k", "r_norm", "crit1", "crit2", "rmse", "flops", "phase")

    def __init__(self):
        self.k: list[int] = []
        self.r_norm: list[float] = []
        self.crit1: list[float] = []
        self.crit2: list[float] = []
        self.rmse: list[float] = []
        self.flops: list[int] = []
        self.phase: list[str] = []

    def __len__(self) -> int:
        return len(self.k)

    def add(self, k, r_norm, crit1, crit2, rmse, flops, phase) -> bool:
        """Append a checkpoint; rows at an already-recorded k are dropped."""
        if self.k:
            if k < self.k[-1]:
                raise ValueError("trace iterations must be nondecreasing")
            if k == self.k[-1]:
                return False
        self.k.append(int(k))
        self.r_norm.append(float(r_norm))
        self.crit1.append(float(crit1))
        self.crit2.append(float(crit2))
        self.rmse.append(float(rmse))
        self.flops.append(int(flops))
        self.phase.append(str(phase))
        return True

    def array(self, column: str) -> np.ndarray:
        if column == "phase":
            return np.asarray(self.phase, dtype=object)
        dtype = np.int64 if column in ("k", "flops") else np.float64
        return np.asarray(getattr(self, column), dtype=dtype)

    def write_csv(self, target) -> None:
        if hasattr(target, "write"):
            self._write(target)
        else:
            from .io import _atomic_write

            _atomic_write(target, self._write)

    def _write(self, fh) -> None:
        fh.write(",".join(self.COLUMNS) + "\n")
        for i in range(len(self.k)):
            fh.write(
                "%d,%.17g,%.17g,%.17g,%.17g,%d,%s\n"
                % (
                    self.k[i],
                    self.r_norm[i],
                    self.crit1[i],
                    self.crit2[i],
                    self.rmse[i],
                    self.flops[i],
                    self.phase[i],
                )
            )


@dataclass
class SolveResult:
    """Final iterates plus bookkeeping for one solver run."""

    x: np.ndarray
    x_cd: Optional[np.ndarray]
    r_cd: Optional[np.ndarray]
    iterations: int
    flops: int
    converged: bool
    reason: str
    trace: RunTrace
    phase_iterations: dict


# ---------------------------------------------------------------------------
# Step kernels.
# ---------------------------------------------------------------------------


def cd_step(A: ProblemMatrix, state: SolverState, j: int) -> float:
    """One optimal coordinate-descent step on column j.

    mu = <r_cd, A_(j)> / ||A_(j)||^2; the residual moves to r_cd - mu*A_(j)
    (orthogonal to the column afterwards) and coordinate j of x_cd gains mu.
    Returns mu.  The sampler guarantees ||A_(j)|| > 0; a zero-norm column
    here is an internal error.
    """
    nsq = A.col_sq_norms[j]
    if nsq <= 0.0:
        raise RuntimeError(f"cd_step: zero-norm column {j} (sampler contract violated)")
    flops = state.flops
    col = A.column(j)
    mu = dot(state.r_cd, col, flops) / nsq
    flops.add(1)
    axpy(-mu, col, state.r_cd, flops)
    state.x_cd[j] += mu
    flops.add(1)
    return mu


def kaczmarz_step(
    A: ProblemMatrix,
    x: np.ndarray,
    beta_i: float,
    i: int,
    flops: Optional[FlopCounter] = None,
) -> float:
    """Project x onto the hyperplane <A^(i), x> = beta_i; returns the coefficient."""
    nsq = A.row_sq_norms[i]
    if nsq <= 0.0:
        raise RuntimeError(f"kaczmarz_step: zero-norm row {i} (sampler contract violated)")
    row = A.row(i)
    delta = (beta_i - dot(x, row, flops)) / nsq
    if flops is not None:
        flops.add(2)
    axpy(delta, row, x, flops)
    return delta


def dual_kaczmarz_step(
    A: ProblemMatrix, q: np.ndarray, i: int, flops: Optional[FlopCounter] = None
) -> float:
    """Project q onto the orthogonal complement of row i; returns the coefficient."""
    nsq = A.row_sq_norms[i]
    if nsq <= 0.0:
        raise RuntimeError(f"dual_kaczmarz_step: zero-norm row {i}")
    row = A.row(i)
    coef = dot(q, row, flops) / nsq
    if flops is not None:
        flops.add(1)
    axpy(-coef, row, q, flops)
    return coef


# ---------------------------------------------------------------------------
# Stopping statistics.
# ---------------------------------------------------------------------------


def _criterion(numerator: float, denominator: float, eps: float) -> tuple[bool, float]:
    if denominator == 0.0:
        met = numerator == 0.0
        return met, (0.0 if met else math.inf)
    value = numerator / denominator
    return value <= eps, value


def check_stop_cd(
    A: ProblemMatrix,
    r_cd: np.ndarray,
    x_ref: np.ndarray,
    eps: float,
    flops: Optional[FlopCounter] = None,
) -> tuple[bool, float]:
    """Residual-orthogonality statistic ||A^T r_cd|| / (||A||_F^2 ||x_ref||).

    Returns (met, value).  With ||x_ref|| = 0 the criterion holds iff the
    numerator is exactly zero.
    """
    numerator = norm2(mat_t_vec(A, r_cd, flops), flops)
    return _criterion(numerator, A.frob_sq * norm2(x_ref, flops), eps)


def check_stop_k(
    A: ProblemMatrix,
    b: np.ndarray,
    r_cd: Optional[np.ndarray],
    x_ref: np.ndarray,
    eps: float,
    flops: Optional[FlopCounter] = None,
) -> tuple[bool, float]:
    """Consistency-gap statistic ||b - r_cd - A x_ref|| / (||A||_F ||x_ref||).

    r_cd=None means no residual estimate is being subtracted (plain Kaczmarz
    on A x = b).  Same zero-denominator rule as :func:`check_stop_cd`.
    """
    gap = b - mat_vec(A, x_ref, flops)
    if r_cd is not None:
        gap -= r_cd
        if flops is not None:
            flops.add(x_ref.size)
    numerator = norm2(gap, flops)
    return _criterion(numerator, A.frob * norm2(x_ref, flops), eps)


# ---------------------------------------------------------------------------
# Phase engine.
# ---------------------------------------------------------------------------


@dataclass
class _PhaseOutcome:
    iterations: int
    converged: bool
    met1: bool
    met2: bool


def _next_gap(position: int, every: int) -> int:
    gap = every - position % every
    return gap if gap else every


def _run_phase(
    mode: str,
    A: ProblemMatrix,
    b: Optional[np.ndarray],
    state: SolverState,
    rc: ResolvedConfig,
    rng: Rng,
    trace: RunTrace,
    *,
    budget: int,
    stop_rule: Optional[str],
    columns: Optional[StepRecord] = None,
    target: Optional[np.ndarray] = None,
    x_oracle: Optional[np.ndarray] = None,
    observer: Optional[Callable] = None,
    phase: str,
) -> _PhaseOutcome:
    """Advance `state` by one algorithm phase.

    mode: "cd" | "ek" | "k".  stop_rule: "crit1" (cd), "both" / "either"
    (ek), "crit2" (k) or None (fixed budget).  `target` is the per-row right
    hand side of a Kaczmarz phase; cd/ek phases use `b`.
    """
    col_sampler = row_sampler = None
    if mode in ("cd", "ek") and columns is None:
        col_sampler = build_sampler(A.col_sq_norms)
    if mode in ("ek", "k"):
        row_sampler = build_sampler(A.row_sq_norms)
    if columns is not None and columns.columns.size and int(columns.columns.max()) >= A.n:
        raise ValueError("recorded column index out of range")

    oracle_norm = norm2(x_oracle) if x_oracle is not None else 0.0
    frozen_r_norm = math.nan
    frozen_crit1_num = math.nan
    if mode == "k":
        frozen_r_norm = norm2(state.r_cd) if state.r_cd is not None else math.nan
        if state.r_cd is not None:
            frozen_crit1_num = norm2(mat_t_vec(A, state.r_cd))

    def evaluate() -> tuple[bool, bool, float, float, float, float]:
        if mode == "k":
            x_ref = state.x
            met2, crit2 = check_stop_k(A, target, None, x_ref, rc.eps_k)
            if state.r_cd is not None:
                met1, crit1 = _criterion(
                    frozen_crit1_num, A.frob_sq * norm2(x_ref), rc.eps_cd
                )
            else:
                met1, crit1 = False, math.nan
            r_norm = frozen_r_norm
        else:
            x_ref = state.x_cd if mode == "cd" else state.x
            met1, crit1 = check_stop_cd(A, state.r_cd, x_ref, rc.eps_cd)
            met2, crit2 = check_stop_k(A, b, state.r_cd, x_ref, rc.eps_k)
            r_norm = norm2(state.r_cd)
        if x_oracle is not None and oracle_norm > 0.0:
            ref = state.x_cd if mode == "cd" else state.x
            rmse = norm2(ref - x_oracle) / oracle_norm
        else:
            rmse = math.nan
        return met1, met2, crit1, crit2, r_norm, rmse

    def stop_met(met1: bool, met2: bool) -> bool:
        if stop_rule == "crit1":
            return met1
        if stop_rule == "crit2":
            return met2
        if stop_rule == "both":
            return met1 and met2
        if stop_rule == "either":
            return met1 or met2
        return False

    checking = rc.stop_on_criteria and stop_rule is not None
    local = 0
    outcome = _PhaseOutcome(0, False, False, False)
    while True:
        due_check = checking and local % rc.check_every == 0
        due_trace = local == 0 or local == budget or state.k % rc.trace_every == 0
        if due_check or due_trace:
            met1, met2, crit1, crit2, r_norm, rmse = evaluate()
            trace.add(state.k, r_norm, crit1, crit2, rmse, state.flops.count, phase)
            if observer is not None:
                observer(state.k, phase, state)
            if due_check and stop_met(met1, met2):
                outcome = _PhaseOutcome(local, True, met1, met2)
                break
        if local >= budget:
            outcome = _PhaseOutcome(local, False, False, False)
            break

        nsteps = min(budget - local, _BLOCK, _next_gap(state.k, rc.trace_every))
        if checking:
            nsteps = min(nsteps, _next_gap(local, rc.check_every))

        if mode == "cd":
            js = _take_columns(columns, local, nsteps, col_sampler, rng)
            for j in js:
                cd_step(A, state, j)
        elif mode == "ek":
            if columns is not None:
                js = _take_columns(columns, local, nsteps, None, rng)
                is_ = row_sampler.draw_many(rng, nsteps).tolist()
            else:
                u = rng.random_array(2 * nsteps)
                js = col_sampler.lookup_many(u[0::2]).tolist()
                is_ = row_sampler.lookup_many(u[1::2]).tolist()
            r_cd, x_ek, flops = state.r_cd, state.x, state.flops
            for j, i in zip(js, is_):
                cd_step(A, state, j)
                beta = b[i] - r_cd[i]
                flops.add(1)
                kaczmarz_step(A, x_ek, beta, i, flops)
        else:
            is_ = row_sampler.draw_many(rng, nsteps).tolist()
            x, flops = state.x, state.flops
            for i in is_:
                kaczmarz_step(A, x, target[i], i, flops)

        local += nsteps
        state.k += nsteps

    return outcome


def _take_columns(columns, offset, nsteps, sampler, rng) -> list:
    if columns is None:
        return sampler.draw_many(rng, nsteps).tolist()
    if offset + nsteps > columns.columns.size:
        raise ValueError("recorded column stream exhausted before the run finished")
    return columns.columns[offset : offset + nsteps].tolist()


# ---------------------------------------------------------------------------
# Public solvers.
# ---------------------------------------------------------------------------


def _problem_parts(problem):
    A, b = problem.A, problem.b
    x_oracle = getattr(problem, "x_o", None)
    return A, np.asarray(b, dtype=np.float64), x_oracle


def _finish(state: SolverState, converged: bool, trace: RunTrace, phases: dict) -> SolveResult:
    state.converged = converged
    state.reason = "stop criteria satisfied" if converged else "iteration budget exhausted"
    return SolveResult(
        x=state.x,
        x_cd=state.x_cd,
        r_cd=state.r_cd,
        iterations=state.k,
        flops=state.flops.count,
        converged=converged,
        reason=state.reason,
        trace=trace,
        phase_iterations=phases,
    )


def solve_cd(problem, config: SolverConfig, columns: Optional[StepRecord] = None,
             observer: Optional[Callable] = None) -> SolveResult:
    """Randomized coordinate descent for min ||b - A x||.

    Stops when crit1 holds with the cd iterate (crit2 holds identically for
    cd, so it is skipped) or when the budget runs out.
    """
    A, b, x_oracle = _problem_parts(problem)
    rc = config.resolve(A.m, A.n)
    rng = Rng(rc.seed)
    state = SolverState(x=np.zeros(A.n), x_cd=None, r_cd=b.copy())
    state.x_cd = state.x  # the cd iterate is the solution iterate
    trace = RunTrace()
    out = _run_phase(
        "cd", A, b, state, rc, rng, trace,
        budget=rc.max_iters, stop_rule="crit1", columns=columns,
        x_oracle=x_oracle, observer=observer, phase=PHASE_CD,
    )
    return _finish(state, out.converged, trace, {PHASE_CD: out.iterations})


def solve_kaczmarz(A: ProblemMatrix, c: np.ndarray, config: SolverConfig,
                   x0: Optional[np.ndarray] = None, r_cd: Optional[np.ndarray] = None,
                   x_oracle: Optional[np.ndarray] = None,
                   observer: Optional[Callable] = None) -> SolveResult:
    """Randomized Kaczmarz on A x = c (assumed consistent to working accuracy).

    With x0 = 0 (default) the iterates stay in range(A^T), so the limit is
    the minimum-norm solution.  Stops when crit2 holds.  `r_cd` is an
    optional residual estimate used only for trace reporting (c = b - r_cd
    in the pipelines); an inconsistent c never converges and is flagged when
    the budget is exhausted.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.size != A.m:
        raise ValueError(f"target has length {c.size}, expected {A.m}")
    rc = config.resolve(A.m, A.n)
    rng = Rng(rc.seed)
    x = np.zeros(A.n) if x0 is None else np.array(x0, dtype=np.float64)
    state = SolverState(x=x, x_cd=None, r_cd=r_cd)
    trace = RunTrace()
    out = _run_phase(
        "k", A, None, state, rc, rng, trace,
        budget=rc.max_iters, stop_rule="crit2", target=c,
        x_oracle=x_oracle, observer=observer, phase=PHASE_K,
    )
    return _finish(state, out.converged, trace, {PHASE_K: out.iterations})


def solve_ek(problem, config: SolverConfig, columns: Optional[StepRecord] = None,
             observer: Optional[Callable] = None) -> SolveResult:
    """Randomized extended Kaczmarz: interleaved cd + Kaczmarz steps.

    Each iteration draws a column (cd step on the residual estimate, plus the
    bookkeeping update of x_cd, which does not affect the outcome) and then a
    row (Kaczmarz step of the ek solution toward b - r_cd, using the
    just-updated residual).  Terminates when crit1 AND crit2 hold with the ek
    iterate.
    """
    A, b, x_oracle = _problem_parts(problem)
    rc = config.resolve(A.m, A.n)
    rng = Rng(rc.seed)
    state = SolverState(x=np.zeros(A.n), x_cd=np.zeros(A.n), r_cd=b.copy())
    trace = RunTrace()
    out = _run_phase(
        "ek", A, b, state, rc, rng, trace,
        budget=rc.max_iters, stop_rule="both", columns=columns,
        x_oracle=x_oracle, observer=observer, phase=PHASE_EK,
    )
    return _finish(state, out.converged, trace, {PHASE_EK: out.iterations})


def solve_cd_k(problem, config: SolverConfig, observer: Optional[Callable] = None) -> SolveResult:
    """cd to its tolerance, then Kaczmarz from zero on A x = b - r_cd.

    The Kaczmarz phase refines x toward the minimum-norm solution of the
    near-consistent system; on full-column-rank problems it changes nothing
    beyond the cd answer.  max_iters bounds the combined iteration count.
    """
    A, b, x_oracle = _problem_parts(problem)
    rc = config.resolve(A.m, A.n)
    rng = Rng(rc.seed)
    state = SolverState(x=np.zeros(A.n), x_cd=None, r_cd=b.copy())
    state.x_cd = state.x
    trace = RunTrace()
    cd_out = _run_phase(
        "cd", A, b, state, rc, rng, trace,
        budget=rc.max_iters, stop_rule="crit1",
        x_oracle=x_oracle, observer=observer, phase=PHASE_CD,
    )
    phases = {PHASE_CD: cd_out.iterations, PHASE_K: 0}
    if not cd_out.converged:
        return _finish(state, False, trace, phases)

    target = b - state.r_cd
    state.x = np.zeros(A.n)
    state.x_cd = None
    k_out = _run_phase(
        "k", A, None, state, rc, rng, trace,
        budget=rc.max_iters - state.k, stop_rule="crit2", target=target,
        x_oracle=x_oracle, observer=observer, phase=PHASE_K,
    )
    phases[PHASE_K] = k_out.iterations
    return _finish(state, k_out.converged, trace, phases)


def solve_cd_ek_k(problem, config: SolverConfig, observer: Optional[Callable] = None) -> SolveResult:
    """cd to the staging tolerance, ek until either stopping rule fires,
    then Kaczmarz warm-started from the ek iterate until crit2 holds.

    The staging tolerance eps_cd_hat (>= eps_cd) controls how early the ek
    phase starts producing solution estimates; the ek phase continues the cd
    residual estimate and starts its own solution from zero.  If the ek phase
    exits because crit2 already holds, the run is done without a Kaczmarz
    phase.
    """
    A, b, x_oracle = _problem_parts(problem)
    rc = config.resolve(A.m, A.n)
    rng = Rng(rc.seed)
    state = SolverState(x=np.zeros(A.n), x_cd=None, r_cd=b.copy())
    state.x_cd = state.x
    trace = RunTrace()
    staged = replace(rc, eps_cd=rc.eps_cd_hat)
    cd_out = _run_phase(
        "cd", A, b, state, staged, rng, trace,
        budget=rc.max_iters, stop_rule="crit1",
        x_oracle=x_oracle, observer=observer, phase=PHASE_CD,
    )
    phases = {PHASE_CD: cd_out.iterations, PHASE_EK: 0, PHASE_K: 0}
    if not cd_out.converged:
        return _finish(state, False, trace, phases)

    state.x_cd = state.x.copy()
    state.x = np.zeros(A.n)
    ek_out = _run_phase(
        "ek", A, b, state, rc, rng, trace,
        budget=rc.max_iters - state.k, stop_rule="either",
        x_oracle=x_oracle, observer=observer, phase=PHASE_EK,
    )
    phases[PHASE_EK] = ek_out.iterations
    if not ek_out.converged:
        return _finish(state, False, trace, phases)
    if ek_out.met2:
        return _finish(state, True, trace, phases)

    target = b - state.r_cd
    k_out = _run_phase(
        "k", A, None, state, rc, rng, trace,
        budget=rc.max_iters - state.k, stop_rule="crit2", target=target,
        x_oracle=x_oracle, observer=observer, phase=PHASE_K,
    )
    phases[PHASE_K] = k_out.iterations
    return _finish(state, k_out.converged, trace, phases)


def solve_cd_k_scheduled(problem, config: SolverConfig, n_cd: int, n_k: int,
                         observer: Optional[Callable] = None) -> SolveResult:
    """cd for exactly n_cd iterations, then Kaczmarz for exactly n_k.

    Fixed-budget variant used by the figure protocols; the stopping rules are
    not consulted.  With n_cd = 0 no residual estimate exists and the Kaczmarz
    phase targets b itself (plain Kaczmarz on A x = b).
    """
    A, b, x_oracle = _problem_parts(problem)
    rc = config.resolve(A.m, A.n)
    rng = Rng(rc.seed)
    state = SolverState(x=np.zeros(A.n), x_cd=None, r_cd=b.copy())
    state.x_cd = state.x
    trace = RunTrace()
    _run_phase(
        "cd", A, b, state, rc, rng, trace,
        budget=n_cd, stop_rule=None,
        x_oracle=x_oracle, observer=observer, phase=PHASE_CD,
    )
    if n_cd == 0:
        target = b.copy()
        state.r_cd = None
    else:
        target = b - state.r_cd
    state.x = np.zeros(A.n)
    state.x_cd = None
    _run_phase(
        "k", A, None, state, rc, rng, trace,
        budget=n_k, stop_rule=None, target=target,
        x_oracle=x_oracle, observer=observer, phase=PHASE_K,
    )
    return _finish(state, False, trace, {PHASE_CD: n_cd, PHASE_K: n_k})


def solve_cd_ek_k_scheduled(problem, config: SolverConfig, n_cd: int, n_ek: int, n_k: int,
                            observer: Optional[Callable] = None) -> SolveResult:
    """cd for n_cd iterations, ek for n_ek, Kaczmarz for n_k (fixed budgets)."""
    A, b, x_oracle = _problem_parts(problem)
    rc = config.resolve(A.m, A.n)
    rng = Rng(rc.seed)
    state = SolverState(x=np.zeros(A.n), x_cd=None, r_cd=b.copy())
    state.x_cd = state.x
    trace = RunTrace()
    _run_phase(
        "cd", A, b, state, rc, rng, trace,
        budget=n_cd, stop_rule=None,
        x_oracle=x_oracle, observer=observer, phase=PHASE_CD,
    )
    state.x_cd = state.x.copy()
    state.x = np.zeros(A.n)
    _run_phase(
        "ek", A, b, state, rc, rng, trace,
        budget=n_ek, stop_rule=None,
        x_oracle=x_oracle, observer=observer, phase=PHASE_EK,
    )
    target = b - state.r_cd
    _run_phase(
        "k", A, None, state, rc, rng, trace,
        budget=n_k, stop_rule=None, target=target,
        x_oracle=x_oracle, observer=observer, phase=PHASE_K,
    )
    return _finish(state, False, trace, {PHASE_CD: n_cd, PHASE_EK: n_ek, PHASE_K: n_k})
