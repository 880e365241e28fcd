"""Reproducible desk-scale studies: convergence-rate regimes, CLT coverage,
bandwidth sweeps, and the closed-form Gaussian ground truth.

Every study is a pure function of (config, seed): replication r draws its
randomness from seed.child(..., r), aggregation is fixed-order, and a
``threads`` argument only distributes the replication loop, so results are
identical at any thread count.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats as scipy_stats

from .errors import DegenerateVarianceError, InputError, OracleUnavailableError
from .measures import LawSpec, sample
from .ot_exact import CostSpec
from .inference import RateParams, SplitConfig, holdout_variance_estimate, rho, split_sample_inference
from .rng import RngSpec
from .smoothing import KernelSpec, SmoothingPlan, estimate_smoothed_cost, seed_spread


def gaussian_w2_oracle(mean_a, mean_b, var_a: float, var_b: float,
                       sigma: float, d: int) -> float:
    """Exact squared 2-Wasserstein distance between the gaussian-smoothed
    isotropic normals N(a, (var_a + sigma^2) I_d) and N(b, (var_b + sigma^2) I_d):

        |a - b|^2 + d * (sqrt(var_a + sigma^2) - sqrt(var_b + sigma^2))^2
    """
    if var_a < 0 or var_b < 0 or sigma < 0:
        raise InputError("variances and bandwidth must be nonnegative")
    a = np.atleast_1d(np.asarray(mean_a, dtype=float))
    b = np.atleast_1d(np.asarray(mean_b, dtype=float))
    if a.shape != (d,) or b.shape != (d,):
        raise InputError(f"mean vectors must have dimension {d}")
    mean_term = float(np.sum((a - b) ** 2))
    sd_a = math.sqrt(var_a + sigma * sigma)
    sd_b = math.sqrt(var_b + sigma * sigma)
    return mean_term + d * (sd_a - sd_b) ** 2


def _law_mean_var(law: LawSpec):
    if law.family != "gaussian":
        return None
    mean = law.mean + (law.shift if law.shift is not None else 0.0)
    return np.asarray(mean, dtype=float), float(law.var)


def _map_indexed(fn: Callable[[int], object], count: int, threads: int) -> list:
    """Run fn(0..count-1), optionally on a thread pool; order-stable output."""
    if threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    results = [None] * count
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(fn, i): i for i in range(count)}
        for fut, i in futures.items():
            results[i] = fut.result()
    return results


def _ols_slope(x: np.ndarray, y: np.ndarray):
    """Least-squares slope of y on x with its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - intercept - slope * x
    dof = len(x) - 2
    se = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else float("nan")
    return slope, intercept, se


@dataclass(frozen=True)
class RateRow:
    n: int
    mean_abs_error: float
    mc_se: float
    predicted_rate: float
    replications: int


@dataclass(frozen=True)
class ExperimentResult:
    """Per-size error table with the fitted and predicted log-log slopes.

    coverage and ks_distance stay None for rate studies and are filled by the
    CLT study.  When the rate parameters sit exactly on the boundary regime,
    N^{-1/2} and N^{-1/2} log N are indistinguishable at desk scale, so both
    candidate fits are reported and ``boundary_regime`` is set.
    """

    table: list
    fitted_slope: float
    slope_se: float
    predicted_slope: float
    boundary_regime: bool = False
    boundary_logcorrected_slope: Optional[float] = None
    oracle_value: float = float("nan")
    reference_error: Optional[float] = None
    reference_flagged: bool = False
    coverage: Optional[float] = None
    ks_distance: Optional[float] = None


@dataclass(frozen=True)
class RateExperimentConfig:
    """Design of one rate-verification study (m = n = N over a size grid)."""

    law_mu: LawSpec
    law_nu: LawSpec
    kernel: KernelSpec
    cost: CostSpec
    sizes: Sequence[int]
    replications: int
    rate_params: RateParams
    seed: RngSpec = RngSpec(0, 0)
    oracle: str = "closed-form-gaussian"
    k: int = 1
    n_ref_multiplier: int = 64
    n_ref_replicates: int = 3

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 4:
            raise InputError("rate experiments need at least 4 sizes")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise InputError("sizes must be strictly ascending")
        if self.replications < 20:
            raise InputError("rate experiments need at least 20 replications per size")
        if self.oracle not in ("closed-form-gaussian", "large-sample-reference"):
            raise InputError(f"unknown oracle {self.oracle!r}")
        if self.oracle == "large-sample-reference" and self.n_ref_multiplier < 50:
            raise InputError("reference size must be at least 50x the largest size")
        object.__setattr__(self, "sizes", sizes)


def _closed_form_oracle(config) -> float:
    pa = _law_mean_var(config.law_mu)
    pb = _law_mean_var(config.law_nu)
    if pa is None or pb is None or config.cost.p != 2.0 or config.kernel.family != "gaussian":
        raise OracleUnavailableError(
            "closed-form oracle needs gaussian laws, gaussian kernel, and p = 2"
        )
    d = config.law_mu.dim
    return gaussian_w2_oracle(pa[0], pb[0], pa[1], pb[1], config.kernel.sigma, d)


def _reference_oracle(law_mu, law_nu, kernel, cost, n_ref: int, replicates: int,
                      seed: RngSpec):
    """Large-sample plug-in reference on a fixed seed lane, averaged over a few
    replicates; the max deviation from the mean is its error estimate."""
    vals = []
    for r in range(replicates):
        lane = seed.child(900_000 + r)
        mu = sample(law_mu, n_ref, lane.child(0))
        nu = sample(law_nu, n_ref, lane.child(1))
        est = estimate_smoothed_cost(mu, nu, kernel, cost, SmoothingPlan(1, lane.child(2)))
        vals.append(est.value)
    center = float(np.mean(vals))
    return center, float(np.max(np.abs(np.asarray(vals) - center)))


def rate_oracle_value(config: RateExperimentConfig):
    if config.oracle == "closed-form-gaussian":
        return _closed_form_oracle(config), None
    return _reference_oracle(config.law_mu, config.law_nu, config.kernel, config.cost,
                             config.n_ref_multiplier * max(config.sizes),
                             config.n_ref_replicates, config.seed)


def run_rate_experiment(config: RateExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Track mean |T_hat - T| over the size grid and fit the log-log slope."""
    oracle_value, ref_error = rate_oracle_value(config)

    def one(flat: int) -> float:
        size_idx, rep = divmod(flat, config.replications)
        lane = config.seed.child(size_idx, rep)
        n_points = config.sizes[size_idx]
        mu = sample(config.law_mu, n_points, lane.child(0))
        nu = sample(config.law_nu, n_points, lane.child(1))
        est = estimate_smoothed_cost(mu, nu, config.kernel, config.cost,
                                     SmoothingPlan(config.k, lane.child(2)))
        return abs(est.value - oracle_value)

    flat_errors = _map_indexed(one, len(config.sizes) * config.replications, threads)
    errors = np.asarray(flat_errors, dtype=float).reshape(len(config.sizes),
                                                          config.replications)
    table = [
        RateRow(
            n=n_points,
            mean_abs_error=float(errors[i].mean()),
            mc_se=float(errors[i].std(ddof=1) / math.sqrt(config.replications)),
            predicted_rate=rho(config.rate_params, n_points),
            replications=config.replications,
        )
        for i, n_points in enumerate(config.sizes)
    ]
    log_n = np.log(np.asarray(config.sizes, dtype=float))
    log_err = np.log(np.asarray([row.mean_abs_error for row in table]))
    slope, _, slope_se = _ols_slope(log_n, log_err)

    q, p, d = config.rate_params.q, config.rate_params.p, config.rate_params.d
    threshold = d + 2.0 * p
    boundary = q == threshold
    predicted = -0.5 if q >= threshold else -(q - p) / (q + d)
    log_corrected = None
    if boundary:
        # second candidate: slope of log(err / log N) against log N
        corrected = log_err - np.log(np.log(np.asarray(config.sizes, dtype=float)))
        log_corrected, _, _ = _ols_slope(log_n, corrected)

    ref_flagged = False
    if ref_error is not None:
        smallest = min(row.mean_abs_error for row in table)
        ref_flagged = ref_error > 0.2 * smallest
    return ExperimentResult(
        table=table,
        fitted_slope=slope,
        slope_se=slope_se,
        predicted_slope=predicted,
        boundary_regime=boundary,
        boundary_logcorrected_slope=log_corrected,
        oracle_value=oracle_value,
        reference_error=ref_error,
        reference_flagged=ref_flagged,
    )


@dataclass(frozen=True)
class CltRow:
    replication: int
    t_hat: float
    tau2: float
    standardized: float
    covered_cost: bool
    covered_dist: bool


@dataclass(frozen=True)
class CltResult:
    """Coverage and normality diagnostics of the standardized cost statistic."""

    rows: list
    coverage_cost: float
    coverage_dist: float
    ks_distance: float
    oracle_value: float
    m: int
    n: int
    alpha: float
    empirical_variance: float
    median_tau2: float


@dataclass(frozen=True)
class CltExperimentConfig:
    law_mu: LawSpec
    law_nu: LawSpec
    kernel: KernelSpec
    cost: CostSpec
    m: int
    n: int
    replications: int
    alpha: float = 0.05
    k: int = 2
    k_eval: int = 256
    split_fraction: float = 0.5
    seed: RngSpec = RngSpec(0, 0)
    oracle: str = "closed-form-gaussian"

    def __post_init__(self):
        if not (self.cost.p > 1.0):
            raise InputError("the CLT study needs transport order p > 1")
        if self.replications < 2:
            raise InputError("need at least 2 replications")


def clt_oracle_value(config: CltExperimentConfig) -> float:
    if config.oracle == "closed-form-gaussian":
        return _closed_form_oracle(config)
    return _reference_oracle(config.law_mu, config.law_nu, config.kernel, config.cost,
                             64 * max(config.m, config.n), 3, config.seed)[0]


def run_clt_experiment(config: CltExperimentConfig, threads: int = 1) -> CltResult:
    """Replicate the full inference pipeline and measure interval coverage and
    the Kolmogorov distance of the standardized statistic to the normal."""
    oracle_value = clt_oracle_value(config)
    if not (oracle_value > 0):
        raise OracleUnavailableError("the CLT study needs a separated design (oracle > 0)")
    delta = oracle_value ** (1.0 / config.cost.p)
    scale = math.sqrt(config.m * config.n / (config.m + config.n))

    def one(rep: int) -> CltRow:
        lane = config.seed.child(rep)
        mu = sample(config.law_mu, config.m, lane.child(0))
        nu = sample(config.law_nu, config.n, lane.child(1))
        report = split_sample_inference(
            mu, nu, config.kernel, config.cost,
            SmoothingPlan(config.k, lane.child(2)),
            SplitConfig(config.split_fraction, lane.child(3)),
            alpha=config.alpha, k_eval=config.k_eval,
        )
        tau = math.sqrt(report.tau2) if report.tau2 > 0 else float("nan")
        return CltRow(
            replication=rep,
            t_hat=report.cost_estimate,
            tau2=report.tau2,
            standardized=scale * (report.cost_estimate - oracle_value) / tau,
            covered_cost=bool(report.ci_cost[0] <= oracle_value <= report.ci_cost[1]),
            covered_dist=bool(report.ci_distance[0] <= delta <= report.ci_distance[1]),
        )

    rows = _map_indexed(one, config.replications, threads)
    tau2s = np.asarray([r.tau2 for r in rows])
    if np.all(tau2s == 0.0):
        raise DegenerateVarianceError("every replication produced tau2 = 0")
    standardized = np.asarray([r.standardized for r in rows])
    valid = np.isfinite(standardized)
    ks = float(scipy_stats.kstest(standardized[valid], "norm").statistic)
    t_hats = np.asarray([r.t_hat for r in rows])
    return CltResult(
        rows=rows,
        coverage_cost=float(np.mean([r.covered_cost for r in rows])),
        coverage_dist=float(np.mean([r.covered_dist for r in rows])),
        ks_distance=ks,
        oracle_value=oracle_value,
        m=config.m, n=config.n, alpha=config.alpha,
        empirical_variance=float(np.var(scale * (t_hats - oracle_value), ddof=1)),
        median_tau2=float(np.median(tau2s)),
    )


@dataclass(frozen=True)
class SigmaSweepRow:
    sigma: float
    t_hat: float
    tau2: float
    seed_spread: float


@dataclass(frozen=True)
class SigmaSweepConfig:
    """Observational sweep of the estimate across smoothing bandwidths.

    law_nu=None reuses the mu sample on both sides (the degenerate shared-data
    diagnostic; combined with paired noise the estimate is exactly zero).
    """

    law_mu: LawSpec
    law_nu: Optional[LawSpec]
    sigmas: Sequence[float]
    cost: CostSpec
    m: int
    n: int
    k: int = 1
    paired: bool = False
    split_fraction: float = 0.5
    k_eval: int = 128
    spread_streams: int = 4
    seed: RngSpec = RngSpec(0, 0)

    def __post_init__(self):
        sig = tuple(float(s) for s in self.sigmas)
        if not sig or any(s <= 0 for s in sig):
            raise InputError("sigma grid must be positive")
        if any(b <= a for a, b in zip(sig, sig[1:])):
            raise InputError("sigma grid must be ascending")
        object.__setattr__(self, "sigmas", sig)


def run_sigma_sweep(config: SigmaSweepConfig, threads: int = 1) -> list:
    """Estimate, hold-out variance, and inner Monte Carlo spread per bandwidth."""
    mu = sample(config.law_mu, config.m, config.seed.child(800_000))
    if config.law_nu is None:
        nu = mu
    else:
        nu = sample(config.law_nu, config.n, config.seed.child(800_001))

    def one(i: int) -> SigmaSweepRow:
        kernel = KernelSpec("gaussian", config.sigmas[i])
        plan = SmoothingPlan(config.k, config.seed.child(i), config.paired)
        est = estimate_smoothed_cost(mu, nu, kernel, config.cost, plan)
        # lane 7 stays clear of the smoothing lanes carved out of child(i)
        _, _, tau2, _, _ = holdout_variance_estimate(
            mu, nu, kernel, config.cost, plan,
            SplitConfig(config.split_fraction, config.seed.child(i, 7)),
            k_eval=config.k_eval,
        )
        spread = seed_spread(mu, nu, kernel, config.cost, plan,
                             streams=config.spread_streams)
        return SigmaSweepRow(sigma=config.sigmas[i], t_hat=est.value,
                             tau2=tau2, seed_spread=spread)

    return _map_indexed(one, len(config.sigmas), threads)


# ---------------------------------------------------------------------------
# delimited output


def _write_csv(path, header_comments: Sequence[str], columns: Sequence[str],
               rows: Sequence[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_rate_csv(result: ExperimentResult, path, header_comments: Sequence[str] = ()) -> None:
    _write_csv(
        path, header_comments,
        ["N", "mean_abs_error", "mc_se", "predicted_rate", "replications"],
        [[r.n, r.mean_abs_error, r.mc_se, r.predicted_rate, r.replications]
         for r in result.table],
    )


def write_clt_csv(result: CltResult, path, header_comments: Sequence[str] = ()) -> None:
    _write_csv(
        path, header_comments,
        ["replication", "t_hat", "tau2", "standardized", "covered_cost", "covered_dist"],
        [[r.replication, r.t_hat, r.tau2, r.standardized,
          int(r.covered_cost), int(r.covered_dist)] for r in result.rows],
    )


def write_sigma_csv(rows: Sequence[SigmaSweepRow], path,
                    header_comments: Sequence[str] = ()) -> None:
    _write_csv(
        path, header_comments,
        ["sigma", "t_hat", "tau2", "seed_spread"],
        [[r.sigma, r.t_hat, r.tau2, r.seed_spread] for r in rows],
    )
