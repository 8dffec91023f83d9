"""Ensemble experiment harness: normalized RMSE trajectories, theoretical
decay-bound curves, coupled comparisons and flop reports.

Per trial, a fresh problem is generated from a derived seed and every
requested algorithm runs on it; the reported curve is
sqrt(mean over trials of ||x^(k) - x_o||^2 / ||x_o||^2) at checkpoints
aligned across algorithms.  Trials are embarrassingly parallel; aggregation
is a deterministic reduction ordered by trial index, so the thread count
never changes output bytes.

Seed layout (stable, part of the reproducibility contract): with
trial_seed = derive_trial_seed(base_seed, trial),

* sub-seed 0 drives problem generation,
* sub-seeds 1..5 drive the solvers, by fixed algorithm slot
  (cd=1, k=2, ek=3, cd+k=4, cd+ek+k=5), so adding or removing algorithms
  never perturbs the others,
* sub-seed 6 drives the shared column stream of coupled runs.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .linalg import norm2
from .problems import EnsembleSpec, LsProblem, generate_problem, kappa_f, pinv_norm
from .sampling import Rng, derive_trial_seed
from .solvers import (
    RunTrace,
    SolveResult,
    SolverConfig,
    record_column_stream,
    solve_cd,
    solve_cd_ek_k,
    solve_cd_ek_k_scheduled,
    solve_cd_k,
    solve_cd_k_scheduled,
    solve_ek,
    solve_kaczmarz,
)

ALGORITHMS = ("cd", "k", "ek", "cd+k", "cd+ek+k")
_ALGO_SLOT = {name: i + 1 for i, name in enumerate(ALGORITHMS)}
_GEN_SLOT = 0
_RECORD_SLOT = 6

BOUND_KINDS = ("cd_residual", "cd_solution", "kaczmarz", "ek_shape")


@dataclass(frozen=True)
class ExperimentSpec:
    """One ensemble experiment: which problems, which algorithms, how long.

    n_phase / ek_phase configure the rank-deficient figure protocol (cd and
    Kaczmarz phase length N, and the middle ek phase length, default N).
    The embedded solver config supplies tolerances for the pipelines; its
    seed/budget/stride fields are overridden per trial.
    """

    ensemble: EnsembleSpec
    algorithms: tuple = ("cd", "ek")
    max_iters: int = 10_000
    trace_every: int = 100
    coupled: bool = False
    n_phase: Optional[int] = None
    ek_phase: Optional[int] = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def validate(self) -> None:
        self.ensemble.validate()
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms: {sorted(unknown)}")
        if not self.algorithms:
            raise ValueError("at least one algorithm is required")
        if self.max_iters < 1 or self.trace_every < 1:
            raise ValueError("max_iters and trace_every must be >= 1")


@dataclass
class RmseCurve:
    """Ensemble-RMSE trajectory of one algorithm on the checkpoint grid.

    samples[t, i] is trial t's normalized error ||x - x_o|| / ||x_o|| at
    checkpoint i; rmse is the root of the mean of samples**2 over trials.
    """

    label: str
    iterations: np.ndarray
    rmse: np.ndarray
    samples: np.ndarray


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    curves: dict
    runs: dict  # algorithm -> list[SolveResult], ordered by trial

    def curve(self, algorithm: str) -> RmseCurve:
        return self.curves[algorithm]


@dataclass(frozen=True)
class BoundCurve:
    """Right-hand side of a theoretical decay bound, evaluated exactly.

    values[k+1] / values[k] is the decay factor 1 - 1/kappa_F^2 (for
    ek_shape, applied once every second iteration).  shape_only marks the
    ek bound whose leading constant is unknown and set to 1.
    """

    kind: str
    iterations: np.ndarray
    values: np.ndarray
    constants: dict
    shape_only: bool = False


def _grid(max_iters: int, trace_every: int) -> np.ndarray:
    grid = np.arange(0, max_iters + 1, trace_every, dtype=np.int64)
    if grid[-1] != max_iters:
        grid = np.append(grid, max_iters)
    return grid


def _series_on_grid(ks, values, grid, fill: float) -> np.ndarray:
    """Carry-forward sample of a checkpoint series onto a grid of ks."""
    if len(ks) == 0:
        return np.full(len(grid), fill)
    idx = np.searchsorted(ks, grid, side="right") - 1
    out = np.where(idx >= 0, values[np.maximum(idx, 0)], fill)
    return out


def _solver_config(spec: ExperimentSpec, seed: int, fixed_budget: bool) -> SolverConfig:
    return replace(
        spec.solver,
        max_iters=spec.max_iters,
        trace_every=spec.trace_every,
        seed=seed,
        stop_on_criteria=not fixed_budget,
    )


def _run_algorithm(algo: str, problem: LsProblem, spec: ExperimentSpec, trial_seed: int, record):
    seed = derive_trial_seed(trial_seed, _ALGO_SLOT[algo])
    if algo == "cd":
        return solve_cd(problem, _solver_config(spec, seed, True), columns=record)
    if algo == "ek":
        return solve_ek(problem, _solver_config(spec, seed, True), columns=record)
    if algo == "k":
        cfg = _solver_config(spec, seed, True)
        return solve_kaczmarz(problem.A, problem.b, cfg, x_oracle=problem.x_o)
    if algo == "cd+k":
        return solve_cd_k(problem, _solver_config(spec, seed, False))
    if algo == "cd+ek+k":
        return solve_cd_ek_k(problem, _solver_config(spec, seed, False))
    raise ValueError(f"unknown algorithm {algo!r}")


def _map_trials(fn, trials: int, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(trials)))
    return [fn(t) for t in range(trials)]


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    """Run every requested algorithm over the trial ensemble.

    cd/k/ek run the full iteration budget (no stopping) so curves cover the
    whole grid; the pipelines run their tolerance-driven phase logic and
    their final error is carried forward past termination.  Deterministic
    given the spec, whatever the thread count.
    """
    spec.validate()
    grid = _grid(spec.max_iters, spec.trace_every)

    def run_one(trial: int):
        trial_seed = derive_trial_seed(spec.ensemble.base_seed, trial)
        problem = generate_problem(spec.ensemble, Rng(derive_trial_seed(trial_seed, _GEN_SLOT)))
        record = None
        if spec.coupled:
            rec_rng = Rng(derive_trial_seed(trial_seed, _RECORD_SLOT))
            record = record_column_stream(problem.A, rec_rng, spec.max_iters)
        out = {}
        for algo in spec.algorithms:
            result = _run_algorithm(algo, problem, spec, trial_seed, record)
            trace = result.trace
            series = _series_on_grid(trace.array("k"), trace.array("rmse"), grid, fill=1.0)
            out[algo] = (series, result)
        return out

    trial_outs = _map_trials(run_one, spec.ensemble.trials, threads)

    curves = {}
    runs = {}
    for algo in spec.algorithms:
        samples = np.vstack([trial_outs[t][algo][0] for t in range(spec.ensemble.trials)])
        rmse = np.sqrt(np.mean(samples * samples, axis=0))
        curves[algo] = RmseCurve(algo, grid.copy(), rmse, samples)
        runs[algo] = [trial_outs[t][algo][1] for t in range(spec.ensemble.trials)]
    return ExperimentResult(spec=spec, curves=curves, runs=runs)


_FIG4_ALGOS = ("ek", "cd+k", "cd+ek+k")


def run_fig4_protocol(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    """Rank-deficient protocol: RMSE as a function of Kaczmarz iterations.

    Every method performs the same number of cd steps and of Kaczmarz steps
    (T = n_phase + ek_phase), scheduled differently: ek interleaves them for
    T iterations; cd+k runs T cd steps then T Kaczmarz steps; cd+ek+k runs
    n_phase cd steps, ek_phase interleaved iterations, then n_phase Kaczmarz
    steps.  Curves are indexed by the number of Kaczmarz steps performed
    (every method's solution iterate starts at zero, so K = 0 maps to a
    normalized error of exactly 1).  Phase lengths are rounded up to
    multiples of trace_every so checkpoints align.
    """
    spec.validate()
    if spec.ensemble.kind != "rank_deficient":
        raise ValueError("the figure protocol runs on rank-deficient ensembles")
    if spec.n_phase is None:
        raise ValueError("n_phase is required for the figure protocol")
    algos = spec.algorithms if spec.algorithms else _FIG4_ALGOS
    unknown = set(algos) - set(_FIG4_ALGOS)
    if unknown:
        raise ValueError(f"algorithms not part of this protocol: {sorted(unknown)}")

    te = spec.trace_every
    n_phase = -(-spec.n_phase // te) * te
    ek_phase = spec.ek_phase if spec.ek_phase is not None else n_phase
    ek_phase = -(-ek_phase // te) * te
    total = n_phase + ek_phase
    grid = _grid(total, te)

    def run_one(trial: int):
        trial_seed = derive_trial_seed(spec.ensemble.base_seed, trial)
        problem = generate_problem(spec.ensemble, Rng(derive_trial_seed(trial_seed, _GEN_SLOT)))
        out = {}
        for algo in algos:
            seed = derive_trial_seed(trial_seed, _ALGO_SLOT[algo])
            cfg = _solver_config(spec, seed, True)
            if algo == "ek":
                cfg = replace(cfg, max_iters=total)
                result = solve_ek(problem, cfg)
                offset, phases = 0, ("ek",)
            elif algo == "cd+k":
                result = solve_cd_k_scheduled(problem, cfg, n_cd=total, n_k=total)
                offset, phases = total, ("k",)
            else:
                result = solve_cd_ek_k_scheduled(
                    problem, cfg, n_cd=n_phase, n_ek=ek_phase, n_k=n_phase
                )
                offset, phases = n_phase, ("ek", "k")
            trace = result.trace
            ks = trace.array("k")
            rmse = trace.array("rmse")
            keep = np.array([p in phases for p in trace.phase], dtype=bool) & (ks >= offset)
            series = _series_on_grid(ks[keep] - offset, rmse[keep], grid, fill=1.0)
            out[algo] = (series, result)
        return out

    trial_outs = _map_trials(run_one, spec.ensemble.trials, threads)

    curves = {}
    runs = {}
    for algo in algos:
        samples = np.vstack([trial_outs[t][algo][0] for t in range(spec.ensemble.trials)])
        rmse = np.sqrt(np.mean(samples * samples, axis=0))
        curves[algo] = RmseCurve(algo, grid.copy(), rmse, samples)
        runs[algo] = [trial_outs[t][algo][1] for t in range(spec.ensemble.trials)]
    return ExperimentResult(spec=spec, curves=curves, runs=runs)


def eval_bound(kind: str, problem: LsProblem, k_max: int, x0=None) -> BoundCurve:
    """Evaluate a theoretical decay bound on iterations 0..k_max.

    * cd_residual: (1 - 1/kappa_F^2)^k * ||b - r_o||^2, bounding the mean
      squared distance of the cd residual from the optimal residual;
    * cd_solution: the same decay times ||A^+||^2 ||b - r_o||^2, bounding
      the mean squared cd solution error;
    * kaczmarz: the same decay times ||x0 - x_o||^2 (x0 defaults to zero),
      for Kaczmarz on a consistent system;
    * ek_shape: decay factor applied every second iteration with the unknown
      leading constant set to 1 (shape only).
    """
    if kind not in BOUND_KINDS:
        raise ValueError(f"unknown bound kind {kind!r}")
    if problem.x_o is None or problem.r_o is None:
        raise ValueError("bound evaluation needs the oracle solution")
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    kappa = kappa_f(problem.A)
    rho = 1.0 - 1.0 / (kappa * kappa)
    constants = {"kappa_f": kappa, "decay": rho}

    if kind == "ek_shape":
        constants["C"] = 1.0
        mult = np.ones(k_max + 1)
        mult[2::2] = rho
        values = np.cumprod(mult)
        return BoundCurve(kind, np.arange(k_max + 1), values, constants, shape_only=True)

    consistent_gap = problem.b - problem.r_o
    if kind == "cd_residual":
        initial = float(consistent_gap @ consistent_gap)
        constants["initial"] = initial
    elif kind == "cd_solution":
        pnorm = pinv_norm(problem.A)
        initial = pnorm * pnorm * float(consistent_gap @ consistent_gap)
        constants["pinv_norm"] = pnorm
        constants["initial"] = initial
    else:
        start = np.zeros(problem.A.n) if x0 is None else np.asarray(x0, dtype=np.float64)
        diff = start - problem.x_o
        initial = float(diff @ diff)
        constants["initial"] = initial
    mult = np.concatenate(([initial], np.full(k_max, rho)))
    values = np.cumprod(mult)
    return BoundCurve(kind, np.arange(k_max + 1), values, constants, shape_only=False)


@dataclass(frozen=True)
class FlopRow:
    algorithm: str
    runs: int
    mean_iterations: float
    mean_flops_per_iteration: float


def flop_report(runs_by_algorithm: dict) -> list[FlopRow]:
    """Mean flops per iteration for each algorithm, from run traces.

    Accepts a mapping algorithm -> iterable of SolveResult or RunTrace.
    """
    rows = []
    for algo, runs in runs_by_algorithm.items():
        per_iter = []
        iters = []
        for run in runs:
            trace = run.trace if isinstance(run, SolveResult) else run
            if not isinstance(trace, RunTrace):
                raise TypeError("flop_report needs SolveResult or RunTrace entries")
            ks = trace.array("k")
            fl = trace.array("flops")
            if ks.size < 2 or ks[-1] == ks[0]:
                continue
            per_iter.append((fl[-1] - fl[0]) / (ks[-1] - ks[0]))
            iters.append(ks[-1] - ks[0])
        if per_iter:
            rows.append(
                FlopRow(algo, len(per_iter), float(np.mean(iters)), float(np.mean(per_iter)))
            )
    return rows


# ---------------------------------------------------------------------------
# Serialization.
# ---------------------------------------------------------------------------


def write_curves_csv(target, curves: dict, bounds: Optional[dict] = None,
                     long_format: bool = False) -> None:
    """Write RMSE curves (and optional bound curves) as CSV.

    Default layout: one row per (algorithm, k) with columns
    ``algo,k,rmse[,bound_<kind>...]``; bound columns repeat the bound values
    at the matching k.  Long format instead stacks everything as
    ``series,k,value`` rows (bounds as series ``bound:<kind>``).
    """
    bounds = bounds or {}

    def write(fh):
        if long_format:
            fh.write("series,k,value\n")
            for name in sorted(curves):
                curve = curves[name]
                for k, v in zip(curve.iterations, curve.rmse):
                    fh.write("%s,%d,%.17g\n" % (name, k, v))
            for name in sorted(bounds):
                bound = bounds[name]
                for k, v in zip(bound.iterations, bound.values):
                    fh.write("bound:%s,%d,%.17g\n" % (name, k, v))
            return
        bound_names = sorted(bounds)
        header = ["algo", "k", "rmse"] + [f"bound_{name}" for name in bound_names]
        fh.write(",".join(header) + "\n")
        for name in sorted(curves):
            curve = curves[name]
            for i, k in enumerate(curve.iterations):
                row = ["%s" % name, "%d" % k, "%.17g" % curve.rmse[i]]
                for bname in bound_names:
                    bound = bounds[bname]
                    row.append("%.17g" % bound.values[k] if k < bound.values.size else "nan")
                fh.write(",".join(row) + "\n")

    if hasattr(target, "write"):
        write(target)
    else:
        from .io import _atomic_write

        _atomic_write(target, write)


def experiment_manifest(spec: ExperimentSpec) -> dict:
    """JSON-ready record of the experiment: spec, derived seeds, versions.

    Deliberately excludes anything execution-dependent (thread count,
    timestamps) so repeated runs produce byte-identical manifests.
    """
    import scipy

    from . import __version__

    ens = spec.ensemble
    return {
        "ensemble": {
            "kind": ens.kind,
            "m": ens.m,
            "n": ens.n,
            "density": ens.density,
            "r": ens.r,
            "trials": ens.trials,
            "base_seed": ens.base_seed,
        },
        "algorithms": list(spec.algorithms),
        "max_iters": spec.max_iters,
        "trace_every": spec.trace_every,
        "coupled": spec.coupled,
        "n_phase": spec.n_phase,
        "ek_phase": spec.ek_phase,
        "solver": {
            "eps_cd": spec.solver.eps_cd,
            "eps_k": spec.solver.eps_k,
            "eps_cd_hat": spec.solver.eps_cd_hat,
            "check_every": spec.solver.check_every,
        },
        "trial_seeds": [derive_trial_seed(ens.base_seed, t) for t in range(ens.trials)],
        "versions": {
            "rankz": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


def write_manifest(target, manifest: dict) -> None:
    payload = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    if hasattr(target, "write"):
        target.write(payload)
    else:
        from .io import _atomic_write

        _atomic_write(target, lambda fh: fh.write(payload))
