"""Figure rendering for study reports.

Each experiment command writes its delimited table and, next to it, a PNG
summarizing the run.  Figures are informational; the CSV/JSON artifacts are
the canonical numeric outputs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy import stats as scipy_stats

from .experiments import CltResult, ExperimentResult


def _finish(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def rate_figure(result: ExperimentResult, path) -> Path:
    """Log-log error decay with the fitted and predicted slopes."""
    ns = np.array([row.n for row in result.table], dtype=float)
    err = np.array([row.mean_abs_error for row in result.table])
    se = np.array([row.mc_se for row in result.table])

    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.errorbar(ns, err, yerr=se, fmt="ko", ms=5, capsize=3, label="mean |error|")
    anchor = err[0] * (ns / ns[0]) ** result.fitted_slope
    ax.plot(ns, anchor, "k--", lw=1,
            label=f"fit: slope {result.fitted_slope:.3f} (se {result.slope_se:.3f})")
    pred = err[0] * (ns / ns[0]) ** result.predicted_slope
    ax.plot(ns, pred, "r:", lw=1.2, label=f"predicted slope {result.predicted_slope:.3f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("N")
    ax.set_ylabel("mean |T_hat - T|")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=9)
    return _finish(fig, path)


def clt_figure(result: CltResult, path) -> Path:
    """Histogram and empirical CDF of the standardized statistic against N(0,1)."""
    z = np.array([row.standardized for row in result.rows])
    z = z[np.isfinite(z)]
    grid = np.linspace(-4, 4, 301)

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 4))
    ax1.hist(z, bins=30, density=True, color="0.7", edgecolor="0.4")
    ax1.plot(grid, scipy_stats.norm.pdf(grid), "k-", lw=1.4, label="N(0,1)")
    ax1.set_xlabel("standardized statistic")
    ax1.set_ylabel("density")
    ax1.legend(fontsize=9)
    ax1.set_title(f"coverage: cost {result.coverage_cost:.3f}, "
                  f"dist {result.coverage_dist:.3f}", fontsize=10)

    zs = np.sort(z)
    ax2.step(zs, np.arange(1, len(zs) + 1) / len(zs), where="post", color="k",
             lw=1, label="empirical CDF")
    ax2.plot(grid, scipy_stats.norm.cdf(grid), "r--", lw=1.2, label="normal CDF")
    ax2.set_xlabel("standardized statistic")
    ax2.set_ylabel("CDF")
    ax2.legend(fontsize=9)
    ax2.set_title(f"Kolmogorov distance {result.ks_distance:.4f}", fontsize=10)
    for ax in (ax1, ax2):
        ax.grid(True, alpha=0.3)
    return _finish(fig, path)


def sigma_figure(rows, path) -> Path:
    """Estimate and inner Monte Carlo spread across smoothing bandwidths."""
    sig = np.array([r.sigma for r in rows])
    t_hat = np.array([r.t_hat for r in rows])
    spread = np.array([r.seed_spread for r in rows])
    tau2 = np.array([r.tau2 for r in rows])

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 4))
    ax1.errorbar(sig, t_hat, yerr=spread, fmt="ko-", ms=4, capsize=3, lw=1)
    ax1.set_xlabel("sigma")
    ax1.set_ylabel("T_hat")
    ax1.set_title("estimate vs bandwidth (bars: seed spread)", fontsize=10)
    ax2.plot(sig, tau2, "ks-", ms=4, lw=1)
    ax2.set_xlabel("sigma")
    ax2.set_ylabel("tau2 (hold-out)")
    ax2.set_title("variance estimate vs bandwidth", fontsize=10)
    for ax in (ax1, ax2):
        ax.grid(True, alpha=0.3)
    return _finish(fig, path)
