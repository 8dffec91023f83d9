"""rankz: randomized coordinate descent / Kaczmarz solvers for linear
least-squares, with a reproducible convergence benchmark harness."""

__version__ = "0.1.0"

from .linalg import (
    DenseMatrix,
    FlopCounter,
    ProblemMatrix,
    SparseMatrix,
    VectorView,
    axpy,
    build_problem_matrix,
    dot,
    mat_t_vec,
    mat_vec,
    norm2,
)
from .problems import (
    EnsembleSpec,
    LsProblem,
    gen_dense,
    gen_rank_deficient,
    gen_sparse,
    generate_problem,
    kappa_f,
    oracle_solution,
)
from .sampling import IndexSampler, Rng, build_sampler, derive_trial_seed
from .solvers import (
    RunTrace,
    SolveResult,
    SolverConfig,
    SolverState,
    StepRecord,
    cd_step,
    check_stop_cd,
    check_stop_k,
    dual_kaczmarz_step,
    kaczmarz_step,
    record_column_stream,
    solve_cd,
    solve_cd_ek_k,
    solve_cd_k,
    solve_ek,
    solve_kaczmarz,
)
from .bench import (
    BoundCurve,
    ExperimentResult,
    ExperimentSpec,
    RmseCurve,
    eval_bound,
    flop_report,
    run_experiment,
    run_fig4_protocol,
)

__all__ = [name for name in dir() if not name.startswith("_")]
