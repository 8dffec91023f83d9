import io as stdio
import math

import numpy as np
import pytest

from rankz.bench import (
    BOUND_KINDS,
    ExperimentSpec,
    eval_bound,
    experiment_manifest,
    flop_report,
    run_experiment,
    run_fig4_protocol,
    write_curves_csv,
    write_manifest,
)
from rankz.linalg import build_problem_matrix, norm2
from rankz.problems import EnsembleSpec, LsProblem, gen_dense, gen_sparse, oracle_solution
from rankz.sampling import Rng
from rankz.solvers import SolverConfig, solve_cd


def _identity_problem(n):
    A = build_problem_matrix(np.eye(n))
    b = np.arange(1.0, n + 1)
    x_o, r_o = oracle_solution(A, b)
    return LsProblem(A=A, b=b, x_o=x_o, r_o=r_o)


class TestEvalBound:
    def test_residual_bound_at_zero(self):
        prob = gen_dense(30, 8, Rng(1))
        bound = eval_bound("cd_residual", prob, 10)
        gap = prob.b - prob.r_o
        assert bound.values[0] == pytest.approx(float(gap @ gap))

    def test_solution_bound_at_zero(self):
        prob = gen_dense(30, 8, Rng(2))
        bound = eval_bound("cd_solution", prob, 10)
        gap = prob.b - prob.r_o
        expected = bound.constants["pinv_norm"] ** 2 * float(gap @ gap)
        assert bound.values[0] == pytest.approx(expected)

    def test_kaczmarz_bound_initial_constant(self):
        prob = gen_dense(20, 6, Rng(3))
        bound = eval_bound("kaczmarz", prob, 5)
        assert bound.values[0] == pytest.approx(float(prob.x_o @ prob.x_o))
        shifted = eval_bound("kaczmarz", prob, 5, x0=prob.x_o)
        assert shifted.values[0] == 0.0

    def test_consecutive_ratio_exact(self):
        prob = gen_dense(40, 10, Rng(4))
        for kind in ("cd_residual", "cd_solution", "kaczmarz"):
            bound = eval_bound(kind, prob, 400)
            rho = bound.constants["decay"]
            ratios = bound.values[1:] / bound.values[:-1]
            assert np.max(np.abs(ratios - rho)) <= 1e-14

    def test_identity_closed_form_decay(self):
        # kappa_F^2 = n for the identity, so after n*ln(100) iterations the
        # bound has decayed to about 1% of its initial value
        prob = _identity_problem(100)
        k = int(round(100 * math.log(100.0)))
        bound = eval_bound("cd_residual", prob, k)
        assert bound.values[-1] / bound.values[0] == pytest.approx(0.01, rel=0.05)

    def test_ek_shape_half_rate(self):
        prob = gen_dense(20, 5, Rng(5))
        bound = eval_bound("ek_shape", prob, 9)
        rho = bound.constants["decay"]
        assert bound.shape_only
        assert bound.values[0] == 1.0
        assert bound.values[1] == 1.0
        for k in range(9):
            assert bound.values[k] == pytest.approx(rho ** (k // 2))

    def test_requires_oracle(self):
        prob = gen_dense(10, 3, Rng(6))
        bare = LsProblem(A=prob.A, b=prob.b)
        with pytest.raises(ValueError):
            eval_bound("cd_residual", bare, 5)

    def test_unknown_kind(self):
        prob = gen_dense(10, 3, Rng(7))
        with pytest.raises(ValueError):
            eval_bound("nope", prob, 5)


class TestRunExperiment:
    def _small_spec(self, **kwargs):
        defaults = dict(
            ensemble=EnsembleSpec(kind="dense", m=40, n=10, trials=5, base_seed=91),
            algorithms=("cd", "ek"),
            max_iters=1200,
            trace_every=60,
        )
        defaults.update(kwargs)
        return ExperimentSpec(**defaults)

    def test_grid_and_shapes(self):
        spec = self._small_spec()
        result = run_experiment(spec)
        for algo in spec.algorithms:
            curve = result.curves[algo]
            assert curve.iterations[0] == 0
            assert curve.iterations[-1] == spec.max_iters
            assert curve.samples.shape == (5, curve.iterations.size)
            assert np.all(curve.rmse >= 0)

    def test_rmse_definition(self):
        spec = self._small_spec()
        result = run_experiment(spec)
        curve = result.curves["cd"]
        recomputed = np.sqrt(np.mean(curve.samples**2, axis=0))
        assert np.array_equal(curve.rmse, recomputed)

    def test_deterministic_and_thread_invariant(self):
        spec = self._small_spec()
        a = run_experiment(spec, threads=1)
        b = run_experiment(spec, threads=1)
        c = run_experiment(spec, threads=3)
        for algo in spec.algorithms:
            assert np.array_equal(a.curves[algo].samples, b.curves[algo].samples)
            assert np.array_equal(a.curves[algo].samples, c.curves[algo].samples)

    def test_cd_beats_ek_on_overdetermined_dense(self):
        spec = self._small_spec(
            ensemble=EnsembleSpec(kind="dense", m=60, n=12, trials=10, base_seed=5),
            max_iters=1000,
            trace_every=50,
        )
        result = run_experiment(spec)
        cd, ek = result.curves["cd"], result.curves["ek"]
        assert cd.rmse[-1] <= ek.rmse[-1]

    def test_identity_like_fast_convergence(self):
        # trivial single-trial run on a tiny well-conditioned system: the
        # recorded rmse reaches the floating-point floor within the budget
        prob = _identity_problem(5)
        trace_rmse = []

        res = solve_cd(
            prob,
            SolverConfig(max_iters=5 * 40, stop_on_criteria=False, trace_every=40, seed=1),
        )
        assert res.trace.array("rmse")[-1] <= 1e-12

    def test_pipelines_allowed_with_carry_forward(self):
        spec = self._small_spec(
            algorithms=("cd+k",),
            solver=SolverConfig(eps_cd=1e-8, eps_k=1e-8),
        )
        result = run_experiment(spec)
        curve = result.curves["cd+k"]
        assert curve.samples.shape[0] == 5
        assert curve.rmse[-1] <= 1e-5

    def test_unknown_algorithm_rejected(self):
        with pytest.raises(ValueError):
            self._small_spec(algorithms=("cd", "magic")).validate()

    def test_coupled_shares_column_stream(self):
        spec = self._small_spec(coupled=True, max_iters=600, trace_every=50)
        result = run_experiment(spec)
        # the two algorithms see identical cd residual trajectories
        for cd_run, ek_run in zip(result.runs["cd"], result.runs["ek"]):
            assert np.allclose(
                cd_run.trace.array("r_norm"), ek_run.trace.array("r_norm"), rtol=1e-12
            )


class TestFig4Protocol:
    def _spec(self, trials=4, n_phase=400, ek_phase=None, seed=17):
        return ExperimentSpec(
            ensemble=EnsembleSpec(kind="rank_deficient", m=30, n=90, r=24,
                                  trials=trials, base_seed=seed),
            algorithms=("ek", "cd+k", "cd+ek+k"),
            max_iters=10**6,
            trace_every=50,
            n_phase=n_phase,
            ek_phase=ek_phase,
        )

    def test_axis_is_kaczmarz_iterations(self):
        spec = self._spec()
        result = run_fig4_protocol(spec)
        total = 800  # n_phase + ek_phase(default n_phase)
        for algo in ("ek", "cd+k", "cd+ek+k"):
            curve = result.curves[algo]
            assert curve.iterations[0] == 0
            assert curve.iterations[-1] == total
            assert curve.samples[:, 0] == pytest.approx(1.0)  # x starts at zero

    def test_pipelines_need_fewer_kaczmarz_iterations(self):
        spec = self._spec(trials=6, n_phase=600)
        result = run_fig4_protocol(spec)
        grid = result.curves["ek"].iterations

        def first_reach(curve, thresh):
            hits = []
            for row in curve.samples:
                idx = np.where(row <= thresh)[0]
                hits.append(grid[idx[0]] if idx.size else np.inf)
            return np.array(hits)

        thresh = 1e-3
        ek_k = first_reach(result.curves["ek"], thresh)
        cdk_k = first_reach(result.curves["cd+k"], thresh)
        wins = np.mean(cdk_k < ek_k)
        assert wins >= 0.5

    def test_requires_rank_deficient_and_n_phase(self):
        bad = ExperimentSpec(
            ensemble=EnsembleSpec(kind="dense", m=10, n=5, trials=1),
            algorithms=("ek",),
            n_phase=100,
        )
        with pytest.raises(ValueError):
            run_fig4_protocol(bad)
        nless = self._spec()
        nless = ExperimentSpec(
            ensemble=nless.ensemble, algorithms=nless.algorithms,
            max_iters=nless.max_iters, trace_every=nless.trace_every,
        )
        with pytest.raises(ValueError):
            run_fig4_protocol(nless)

    def test_deterministic_and_thread_invariant(self):
        spec = self._spec(trials=3)
        a = run_fig4_protocol(spec, threads=1)
        b = run_fig4_protocol(spec, threads=2)
        for algo in spec.algorithms:
            assert np.array_equal(a.curves[algo].samples, b.curves[algo].samples)


class TestFlopReport:
    def test_dense_rates(self):
        spec = ExperimentSpec(
            ensemble=EnsembleSpec(kind="dense", m=100, n=20, trials=3, base_seed=3),
            algorithms=("cd", "ek"),
            max_iters=800,
            trace_every=100,
        )
        result = run_experiment(spec)
        rows = {row.algorithm: row for row in flop_report(result.runs)}
        m, n = 100, 20
        assert 4 * m <= rows["cd"].mean_flops_per_iteration <= 4 * m + 64
        assert 4 * m + 4 * n <= rows["ek"].mean_flops_per_iteration <= 4 * m + 4 * n + 64

    def test_sparse_rate_tracks_density(self):
        spec = ExperimentSpec(
            ensemble=EnsembleSpec(kind="sparse", m=200, n=80, density=0.25,
                                  trials=3, base_seed=4),
            algorithms=("cd",),
            max_iters=600,
            trace_every=100,
        )
        result = run_experiment(spec)
        rate = flop_report(result.runs)[0].mean_flops_per_iteration
        expected = 4 * 0.25 * 200
        assert abs(rate - expected) <= 0.2 * expected

    def test_accepts_traces(self):
        prob = gen_dense(50, 10, Rng(5))
        res = solve_cd(prob, SolverConfig(max_iters=300, stop_on_criteria=False, seed=1))
        rows = flop_report({"cd": [res.trace]})
        assert rows[0].runs == 1


class TestSerialization:
    def test_csv_default_layout(self):
        spec = ExperimentSpec(
            ensemble=EnsembleSpec(kind="dense", m=20, n=5, trials=2, base_seed=8),
            algorithms=("cd",),
            max_iters=200,
            trace_every=50,
        )
        result = run_experiment(spec)
        buf = stdio.StringIO()
        write_curves_csv(buf, result.curves)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "algo,k,rmse"
        assert len(lines) == 1 + result.curves["cd"].iterations.size

    def test_csv_with_bounds_and_long_format(self):
        prob = gen_dense(20, 5, Rng(9))
        spec = ExperimentSpec(
            ensemble=EnsembleSpec(kind="dense", m=20, n=5, trials=1, base_seed=9),
            algorithms=("cd",),
            max_iters=100,
            trace_every=50,
        )
        result = run_experiment(spec)
        bounds = {"cd_residual": eval_bound("cd_residual", prob, 100)}
        wide = stdio.StringIO()
        write_curves_csv(wide, result.curves, bounds)
        assert wide.getvalue().splitlines()[0] == "algo,k,rmse,bound_cd_residual"
        tall = stdio.StringIO()
        write_curves_csv(tall, result.curves, bounds, long_format=True)
        lines = tall.getvalue().splitlines()
        assert lines[0] == "series,k,value"
        assert any(line.startswith("bound:cd_residual,") for line in lines)

    def test_manifest_contents(self):
        spec = ExperimentSpec(
            ensemble=EnsembleSpec(kind="sparse", m=10, n=5, density=0.5,
                                  trials=3, base_seed=12),
            algorithms=("cd", "ek"),
            max_iters=100,
            trace_every=10,
        )
        manifest = experiment_manifest(spec)
        assert manifest["ensemble"]["kind"] == "sparse"
        assert len(manifest["trial_seeds"]) == 3
        assert "rankz" in manifest["versions"]
        assert "threads" not in manifest
        buf = stdio.StringIO()
        write_manifest(buf, manifest)
        assert buf.getvalue().endswith("\n")
