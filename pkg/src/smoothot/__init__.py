"""smoothot: two-sample estimation and inference for Gaussian-smoothed
optimal transport costs, with an exact discrete solver and a reproducible
experiment harness."""

from .errors import (
    DegenerateVarianceError,
    InputError,
    NullProximityError,
    OracleUnavailableError,
    SmoothOTError,
    SolverError,
)
from .rng import RngSpec
from .measures import (
    EmpiricalMeasure,
    LawSpec,
    MomentOrder,
    empirical_from_rows,
    moment,
    read_points_csv,
    sample,
)
from .ot_exact import (
    CostSpec,
    DualFunction,
    EnvelopeDiagnostic,
    TransportSolution,
    brute_force_ot,
    c_transform,
    cost_matrix,
    envelope_check,
    solution_residuals,
    solve_ot,
)
from .smoothing import (
    KernelSpec,
    SmoothedCostEstimate,
    SmoothedPotential,
    SmoothingPlan,
    dual_reduction_bound,
    estimate_smoothed_cost,
    eval_smoothed_potential,
    seed_spread,
    smooth_measure,
    smoothed_potential_values,
)
from .inference import (
    InferenceReport,
    NormalizedPotentials,
    RateParams,
    SplitConfig,
    TestResult,
    combine_tau2,
    holdout_variance_estimate,
    normalize_potentials,
    r_mn,
    rho,
    split_sample_inference,
    two_sample_test,
    wald_half_widths,
    z_quantile,
)
from .experiments import (
    CltExperimentConfig,
    CltResult,
    ExperimentResult,
    RateExperimentConfig,
    SigmaSweepConfig,
    gaussian_w2_oracle,
    run_clt_experiment,
    run_rate_experiment,
    run_sigma_sweep,
    write_clt_csv,
    write_rate_csv,
    write_sigma_csv,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
