"""Command-line front end: generate problems, run single solves, run
experiment suites.

Exit codes: 0 success/converged, 2 iteration budget exhausted, 3 input or
usage error, 4 I/O error.  The default seed comes from --seed, falling back
to the RANKZ_SEED environment variable (decimal or 0x-hex), then 0.  Every
invocation with identical flags and seed writes byte-identical outputs,
independent of --threads.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench, io as rio, problems, solvers
from .sampling import Rng, parse_seed
from .solvers import SolverConfig, StepRecord

EXIT_OK = 0
EXIT_BUDGET = 2
EXIT_INPUT = 3
EXIT_IO = 4

ALGO_CHOICES = ("cd", "k", "ek", "cd+k", "cd+ek+k")
_KIND_ALIASES = {"dense": "dense", "sparse": "sparse", "rankdef": "rank_deficient"}


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to the documented input-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_INPUT)


def _seed_type(text):
    try:
        return parse_seed(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _default_seed() -> int:
    env = os.environ.get("RANKZ_SEED")
    if env:
        return parse_seed(env)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="rankz", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a problem bundle on disk")
    gen.add_argument("--kind", required=True, choices=sorted(_KIND_ALIASES))
    gen.add_argument("--m", type=int, required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--density", type=float, default=0.25, help="sparse only")
    gen.add_argument("--r", type=int, default=None, help="rank (rankdef only)")
    gen.add_argument("--seed", type=_seed_type, default=None)
    gen.add_argument("--out", required=True, help="output path prefix")

    solve = sub.add_parser("solve", help="run one solver on a problem bundle")
    solve.add_argument("--problem", help="path prefix written by `rankz gen`")
    solve.add_argument("--matrix", help="Matrix Market file (alternative to --problem)")
    solve.add_argument("--rhs", help="right-hand side vector file")
    solve.add_argument("--oracle", help="reference solution vector file (optional)")
    solve.add_argument("--algo", required=True, choices=ALGO_CHOICES)
    solve.add_argument("--eps-cd", type=float, default=1e-6)
    solve.add_argument("--eps-k", type=float, default=1e-6)
    solve.add_argument("--eps-cd-hat", type=float, default=None)
    solve.add_argument("--max-iters", type=int, default=1_000_000)
    solve.add_argument("--check-every", type=int, default=None)
    solve.add_argument("--trace-every", type=int, default=None)
    solve.add_argument("--seed", type=_seed_type, default=None)
    solve.add_argument("--trace", help="write the run trace CSV here")
    solve.add_argument("--columns", help="replay column indices from this file (cd/ek)")
    solve.add_argument(
        "--record-columns",
        help="pre-draw the column stream, use it, and dump it to this file (cd/ek)",
    )

    bench_p = sub.add_parser("bench", help="run an ensemble experiment")
    bench_p.add_argument("--suite", choices=("fig1", "fig2", "fig3", "fig4"))
    bench_p.add_argument("--scale", type=float, default=1.0)
    bench_p.add_argument("--kind", choices=sorted(_KIND_ALIASES))
    bench_p.add_argument("--m", type=int)
    bench_p.add_argument("--n", type=int)
    bench_p.add_argument("--density", type=float, default=0.25)
    bench_p.add_argument("--r", type=int)
    bench_p.add_argument("--trials", type=int, default=100)
    bench_p.add_argument("--seed", type=_seed_type, default=None)
    bench_p.add_argument("--algos", help="comma list from: " + ",".join(ALGO_CHOICES))
    bench_p.add_argument("--max-iters", type=int, default=None)
    bench_p.add_argument("--trace-every", type=int, default=None)
    bench_p.add_argument("--n-phase", type=int, default=None, help="fig4 cd/K phase length")
    bench_p.add_argument("--ek-phase", type=int, default=None, help="fig4 middle phase length")
    bench_p.add_argument("--coupled", action="store_true",
                         help="share the column stream between cd and ek within a trial")
    bench_p.add_argument("--eps-cd", type=float, default=1e-6)
    bench_p.add_argument("--eps-k", type=float, default=1e-6)
    bench_p.add_argument("--eps-cd-hat", type=float, default=None)
    bench_p.add_argument("--bounds", help="comma list from: " + ",".join(bench.BOUND_KINDS))
    bench_p.add_argument("--threads", type=int, default=1)
    bench_p.add_argument("--long-format", action="store_true")
    bench_p.add_argument("--out", required=True, help="output path prefix")

    return parser


def _cmd_gen(args) -> int:
    kind = _KIND_ALIASES[args.kind]
    seed = args.seed if args.seed is not None else _default_seed()
    spec = problems.EnsembleSpec(
        kind=kind,
        m=args.m,
        n=args.n,
        density=args.density if kind == "sparse" else None,
        r=args.r if kind == "rank_deficient" else None,
        base_seed=seed,
    )
    spec.validate()
    problem = problems.generate_problem(spec, Rng(seed))
    meta = {"kind": kind, "seed": seed}
    if kind == "sparse":
        meta["density"] = args.density
    if kind == "rank_deficient":
        meta["r"] = args.r
    written = problems.save_problem(args.out, problem, meta)
    for path in written:
        print(path)
    return EXIT_OK


def _load_solve_problem(args) -> problems.LsProblem:
    if args.problem:
        return problems.load_problem(args.problem)
    if not args.matrix or not args.rhs:
        raise ValueError("solve needs --problem or both --matrix and --rhs")
    A = rio.load_problem_matrix(args.matrix)
    b = rio.load_vector(args.rhs)
    x_o = rio.load_vector(args.oracle) if args.oracle else None
    r_o = None
    if x_o is not None:
        from .linalg import mat_vec

        r_o = b - mat_vec(A, x_o)
    return problems.LsProblem(A=A, b=b, x_o=x_o, r_o=r_o)


def _cmd_solve(args) -> int:
    problem = _load_solve_problem(args)
    seed = args.seed if args.seed is not None else _default_seed()
    config = SolverConfig(
        eps_cd=args.eps_cd,
        eps_k=args.eps_k,
        eps_cd_hat=args.eps_cd_hat,
        max_iters=args.max_iters,
        check_every=args.check_every,
        trace_every=args.trace_every,
        seed=seed,
    )
    config.validate()

    columns = None
    if args.columns and args.record_columns:
        raise ValueError("--columns and --record-columns are mutually exclusive")
    if args.columns or args.record_columns:
        if args.algo not in ("cd", "ek"):
            raise ValueError("column streams apply only to cd and ek")
    if args.columns:
        columns = StepRecord(rio.load_index_stream(args.columns))
    elif args.record_columns:
        columns = solvers.record_column_stream(problem.A, Rng(seed), args.max_iters)

    if args.algo == "cd":
        result = solvers.solve_cd(problem, config, columns=columns)
    elif args.algo == "ek":
        result = solvers.solve_ek(problem, config, columns=columns)
    elif args.algo == "k":
        result = solvers.solve_kaczmarz(problem.A, problem.b, config, x_oracle=problem.x_o)
    elif args.algo == "cd+k":
        result = solvers.solve_cd_k(problem, config)
    else:
        result = solvers.solve_cd_ek_k(problem, config)

    if args.record_columns:
        rio.save_index_stream(args.record_columns, columns.columns)
    if args.trace:
        result.trace.write_csv(args.trace)

    trace = result.trace
    print(f"algo: {args.algo}")
    print(f"converged: {result.converged} ({result.reason})")
    print(f"iterations: {result.iterations}")
    print(f"flops: {result.flops}")
    print("crit1: %.17g" % trace.crit1[-1])
    print("crit2: %.17g" % trace.crit2[-1])
    if problem.x_o is not None and not math.isnan(trace.rmse[-1]):
        print("rel_error_vs_oracle: %.17g" % trace.rmse[-1])
    return EXIT_OK if result.converged else EXIT_BUDGET


_SUITES = {
    # paper-scale dimensions; --scale shrinks them proportionally
    "fig1": {"kind": "dense", "m": 2000, "n": 500},
    "fig2": {"kind": "dense", "m": 10000, "n": 500},
    "fig3": {"kind": "sparse", "m": 2000, "n": 800, "density": 0.25},
    "fig4": {"kind": "rank_deficient", "m": 500, "n": 2000, "r": 400, "n_phase": 2000},
}


def _bench_spec(args) -> tuple[bench.ExperimentSpec, bool]:
    seed = args.seed if args.seed is not None else _default_seed()
    scale = args.scale
    if scale <= 0:
        raise ValueError("--scale must be positive")

    if args.suite:
        preset = dict(_SUITES[args.suite])
        kind = preset["kind"]
        m = math.ceil(preset["m"] * scale)
        n = math.ceil(preset["n"] * scale)
        density = preset.get("density")
        r = math.ceil(preset["r"] * scale) if "r" in preset else None
        n_phase = args.n_phase
        if n_phase is None and "n_phase" in preset:
            n_phase = max(1, math.ceil(preset["n_phase"] * scale))
        fig4 = args.suite == "fig4"
    else:
        if not args.kind or not args.m or not args.n:
            raise ValueError("bench needs --suite or --kind with --m and --n")
        kind = _KIND_ALIASES[args.kind]
        m, n = args.m, args.n
        density = args.density if kind == "sparse" else None
        r = args.r
        n_phase = args.n_phase
        fig4 = kind == "rank_deficient" and n_phase is not None

    if fig4:
        if n_phase is None:
            raise ValueError("the fig4 protocol needs --n-phase")
        ek_phase = args.ek_phase if args.ek_phase is not None else n_phase
        total = n_phase + ek_phase
        max_iters = args.max_iters or total
        trace_every = args.trace_every or max(1, total // 200)
        default_algos = "ek,cd+k,cd+ek+k"
    else:
        ek_phase = args.ek_phase
        max_iters = args.max_iters or 160 * min(m, n)
        trace_every = args.trace_every or max(1, max_iters // 200)
        default_algos = "cd,ek"

    algos = tuple((args.algos or default_algos).split(","))
    ensemble = problems.EnsembleSpec(
        kind=kind, m=m, n=n, density=density, r=r, trials=args.trials, base_seed=seed
    )
    solver = SolverConfig(eps_cd=args.eps_cd, eps_k=args.eps_k, eps_cd_hat=args.eps_cd_hat)
    spec = bench.ExperimentSpec(
        ensemble=ensemble,
        algorithms=algos,
        max_iters=max_iters,
        trace_every=trace_every,
        coupled=args.coupled,
        n_phase=n_phase,
        ek_phase=ek_phase,
        solver=solver,
    )
    spec.validate()
    return spec, fig4


def _cmd_bench(args) -> int:
    spec, fig4 = _bench_spec(args)
    if args.threads < 1:
        raise ValueError("--threads must be >= 1")
    if fig4:
        result = bench.run_fig4_protocol(spec, threads=args.threads)
    else:
        result = bench.run_experiment(spec, threads=args.threads)

    bounds = {}
    if args.bounds:
        kinds = args.bounds.split(",")
        for kind in kinds:
            if kind not in bench.BOUND_KINDS:
                raise ValueError(f"unknown bound kind {kind!r}")
        # ensemble-mean bound: average each trial problem's bound values
        from .sampling import derive_trial_seed

        k_max = int(next(iter(result.curves.values())).iterations[-1])
        acc = {kind: None for kind in kinds}
        for trial in range(spec.ensemble.trials):
            trial_seed = derive_trial_seed(spec.ensemble.base_seed, trial)
            problem = problems.generate_problem(spec.ensemble, Rng(derive_trial_seed(trial_seed, 0)))
            for kind in kinds:
                curve = bench.eval_bound(kind, problem, k_max)
                acc[kind] = curve.values if acc[kind] is None else acc[kind] + curve.values
        for kind in kinds:
            values = acc[kind] / spec.ensemble.trials
            bounds[kind] = bench.BoundCurve(
                kind, np.arange(k_max + 1), values,
                {"note": "mean over trial ensembles"}, kind == "ek_shape",
            )

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    csv_path = out.with_suffix(".csv")
    manifest_path = out.with_suffix(".json")
    bench.write_curves_csv(csv_path, result.curves, bounds, long_format=args.long_format)
    bench.write_manifest(manifest_path, bench.experiment_manifest(spec))

    print(csv_path)
    print(manifest_path)
    for row in bench.flop_report(result.runs):
        print(
            "flops/iter %-8s runs=%d mean_iters=%.1f mean=%.2f"
            % (row.algorithm, row.runs, row.mean_iterations, row.mean_flops_per_iteration)
        )
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "solve":
            return _cmd_solve(args)
        return _cmd_bench(args)
    except (ValueError, TypeError) as exc:
        sys.stderr.write(f"rankz: input error: {exc}\n")
        return EXIT_INPUT
    except OSError as exc:
        sys.stderr.write(f"rankz: i/o error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
