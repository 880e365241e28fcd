"""Command-line interface.

Subcommands: ot, smooth-cost, infer, test, rate-exp, clt-exp, sigma-sweep.

Configuration precedence is defaults < config file (--config, TOML or JSON)
< explicit flags.  Every artifact embeds the fully resolved configuration,
and writing to --out also produces a ``<out>.config.json`` sidecar; rerunning
the command with ``--config <sidecar>`` reproduces the numeric output
byte for byte (figures are informational and excluded from that contract).

Exit codes: 0 success, 2 input/configuration error, 3 solver or degenerate
numeric failure, 4 null-proximity refusal of the distance interval.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateVarianceError,
    InputError,
    NullProximityError,
    OracleUnavailableError,
    SolverError,
)
from .experiments import (
    CltExperimentConfig,
    RateExperimentConfig,
    SigmaSweepConfig,
    run_clt_experiment,
    run_rate_experiment,
    run_sigma_sweep,
    write_clt_csv,
    write_rate_csv,
    write_sigma_csv,
)
from .inference import RateParams, SplitConfig, split_sample_inference, two_sample_test
from .measures import LawSpec, read_points_csv
from .ot_exact import CostSpec, solve_ot
from .rng import RngSpec
from .smoothing import KernelSpec, SmoothingPlan, estimate_smoothed_cost

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_NULL = 4

GAUSS_01 = {"family": "gaussian", "dim": 1, "mean": [0.0], "var": 1.0}
GAUSS_11 = {"family": "gaussian", "dim": 1, "mean": [1.0], "var": 1.0}
GAUSS_21 = {"family": "gaussian", "dim": 1, "mean": [2.0], "var": 1.0}

DEFAULTS = {
    "ot": {
        "mu": None, "nu": None, "p": 2.0, "format": "json",
    },
    "smooth-cost": {
        "mu": None, "nu": None, "p": 2.0, "sigma": 1.0, "k": 1,
        "seed": 0, "stream": 0, "paired": False, "kernel": "gaussian",
        "format": "json",
    },
    "infer": {
        "mu": None, "nu": None, "p": 2.0, "sigma": 1.0, "k": 2,
        "seed": 0, "stream": 0, "kernel": "gaussian", "paired": False,
        "split": 0.5, "alpha": 0.05, "k_eval": 256, "null_spread_streams": 4,
        "format": "json",
    },
    "test": {
        "mu": None, "nu": None, "p": 2.0, "sigma": 1.0, "k": 1,
        "seed": 0, "stream": 0, "kernel": "gaussian",
        "q_mu": 10.0, "q_nu": 10.0, "threshold_mult": 1.0,
        "format": "json",
    },
    "rate-exp": {
        "law_mu": GAUSS_01, "law_nu": GAUSS_11, "kernel": "gaussian",
        "sigma": 1.0, "p": 2.0, "sizes": [100, 200, 400, 800, 1600],
        "replications": 50, "q_mu": 10.0, "k": 1, "seed": 0, "stream": 0,
        "oracle": "closed-form-gaussian", "n_ref_multiplier": 64,
        "threads": 1, "figures": True, "format": "csv",
    },
    "clt-exp": {
        "law_mu": GAUSS_01, "law_nu": GAUSS_21, "kernel": "gaussian",
        "sigma": 0.5, "p": 2.0, "m": 4000, "n": 4000, "replications": 500,
        "alpha": 0.05, "k": 2, "k_eval": 256, "split": 0.5,
        "seed": 0, "stream": 0, "oracle": "closed-form-gaussian",
        "threads": 1, "figures": True, "format": "csv",
    },
    "sigma-sweep": {
        "law_mu": GAUSS_01, "law_nu": GAUSS_11,
        "sigmas": [0.25, 0.5, 1.0, 2.0], "p": 2.0, "m": 500, "n": 500,
        "k": 1, "paired": False, "split": 0.5, "spread_streams": 4,
        "seed": 0, "stream": 0, "threads": 1, "figures": True, "format": "csv",
    },
}


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise InputError(f"config file {p} does not exist")
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ImportError:  # Python 3.10
            import tomli as tomllib
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise InputError(f"{p}: invalid TOML: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{p}: invalid JSON: {exc}") from exc


def _resolve(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    file_cfg = _load_config_file(args.config) if args.config else {}
    file_cfg.pop("command", None)
    unknown = set(file_cfg) - set(cfg)
    if unknown:
        raise InputError(f"unknown config keys for {command}: {sorted(unknown)}")
    cfg.update(file_cfg)
    for key in cfg:
        flag = key.replace("-", "_")
        if hasattr(args, flag) and getattr(args, flag) is not None:
            cfg[key] = getattr(args, flag)
    cfg["command"] = command
    if cfg.get("format") not in (None, "json", "csv"):
        raise InputError(f"unsupported format {cfg.get('format')!r}; use json or csv")
    return cfg


def _echo(cfg: dict) -> dict:
    """Resolved configuration as embedded in artifacts.  Execution parameters
    that cannot change the numbers (output path, thread cap, figure toggle)
    are not part of the provenance, so reruns at any thread count reproduce
    artifacts byte for byte."""
    return {k: v for k, v in cfg.items() if k not in ("out", "threads", "figures")}


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _emit(cfg: dict, payload: dict, out, rows_writer=None) -> None:
    """Write the artifact (JSON, or delimited via rows_writer) plus the
    config sidecar; without --out, print JSON to stdout."""
    if out is None:
        sys.stdout.write(_dump_json(payload))
        return
    out = Path(out)
    if cfg.get("format", "json") == "csv" and rows_writer is not None:
        rows_writer(out)
    else:
        _write_text(out, _dump_json(payload))
    _write_text(Path(str(out) + ".config.json"), _dump_json(_echo(cfg)))
    sys.stdout.write(f"wrote {out}\n")


def _measures_from_cfg(cfg: dict):
    if not cfg.get("mu") or not cfg.get("nu"):
        raise InputError("two input CSV files are required (positional or config keys mu/nu)")
    return read_points_csv(cfg["mu"]), read_points_csv(cfg["nu"])


def _flat_csv_writer(cfg: dict, record: dict):
    """One-row CSV artifact for scalar reports."""

    def write(out: Path) -> None:
        keys = list(record.keys())
        lines = ["# config: " + json.dumps(_echo(cfg), sort_keys=True)]
        lines.append(",".join(keys))
        lines.append(",".join(repr(record[k]) if isinstance(record[k], float)
                              else str(record[k]) for k in keys))
        _write_text(out, "\n".join(lines) + "\n")

    return write


# ---------------------------------------------------------------------------
# commands


def cmd_ot(cfg: dict) -> int:
    mu, nu = _measures_from_cfg(cfg)
    sol = solve_ot(mu, nu, CostSpec(float(cfg["p"])))
    coo = sol.plan
    order = np.lexsort((coo.col, coo.row))
    triplets = [[int(coo.row[i]), int(coo.col[i]), float(coo.data[i])] for i in order]
    payload = {
        "config": _echo(cfg),
        "cost": sol.cost,
        "duality_gap": sol.duality_gap,
        "phi": [float(v) for v in sol.phi],
        "psi": [float(v) for v in sol.psi],
        "plan": triplets,
    }
    sys.stdout.write(f"cost {sol.cost!r}\n")

    def rows_writer(out: Path) -> None:
        lines = ["# config: " + json.dumps(_echo(cfg), sort_keys=True),
                 f"# cost: {sol.cost!r}", "i,j,mass"]
        lines += [f"{i},{j},{m!r}" for i, j, m in triplets]
        _write_text(out, "\n".join(lines) + "\n")

    _emit(cfg, payload, cfg.get("out"), rows_writer)
    return EXIT_OK


def _plan_from_cfg(cfg: dict) -> SmoothingPlan:
    return SmoothingPlan(int(cfg["k"]), RngSpec(int(cfg["seed"]), int(cfg["stream"])),
                         bool(cfg.get("paired", False)))


def cmd_smooth_cost(cfg: dict) -> int:
    mu, nu = _measures_from_cfg(cfg)
    est = estimate_smoothed_cost(mu, nu, KernelSpec(cfg["kernel"], float(cfg["sigma"])),
                                 CostSpec(float(cfg["p"])), _plan_from_cfg(cfg))
    record = {"value": est.value, "distance": est.distance,
              "m": est.m, "n": est.n, "k": est.k}
    payload = {"config": _echo(cfg), **record}
    sys.stdout.write(f"value {est.value!r}\n")
    _emit(cfg, payload, cfg.get("out"), _flat_csv_writer(cfg, record))
    return EXIT_OK


def cmd_infer(cfg: dict) -> int:
    mu, nu = _measures_from_cfg(cfg)
    report = split_sample_inference(
        mu, nu,
        KernelSpec(cfg["kernel"], float(cfg["sigma"])),
        CostSpec(float(cfg["p"])),
        _plan_from_cfg(cfg),
        SplitConfig(float(cfg["split"]), RngSpec(int(cfg["seed"]), int(cfg["stream"])).child(7)),
        alpha=float(cfg["alpha"]),
        k_eval=int(cfg["k_eval"]),
        null_spread_streams=int(cfg["null_spread_streams"]),
    )
    record = report.to_json_dict()
    payload = {"config": _echo(cfg), "report": record}
    sys.stdout.write(
        f"cost_estimate {report.cost_estimate!r} "
        f"ci [{report.ci_cost[0]!r}, {report.ci_cost[1]!r}]\n"
    )
    _emit(cfg, payload, cfg.get("out"), _flat_csv_writer(cfg, record))
    return EXIT_OK


def cmd_test(cfg: dict) -> int:
    mu, nu = _measures_from_cfg(cfg)
    p = float(cfg["p"])
    d = mu.dim
    result = two_sample_test(
        mu, nu,
        KernelSpec(cfg["kernel"], float(cfg["sigma"])),
        CostSpec(p),
        _plan_from_cfg(cfg),
        RateParams(float(cfg["q_mu"]), p, d),
        RateParams(float(cfg["q_nu"]), p, d),
        threshold_multiplier=float(cfg["threshold_mult"]),
    )
    record = {"statistic": result.statistic, "threshold": result.threshold,
              "reject": result.reject, "r_mn": result.r_mn}
    payload = {"config": _echo(cfg), "result": record}
    sys.stdout.write(f"reject {result.reject} statistic {result.statistic!r} "
                     f"threshold {result.threshold!r}\n")
    record_csv = dict(record, reject=int(result.reject))
    _emit(cfg, payload, cfg.get("out"), _flat_csv_writer(cfg, record_csv))
    return EXIT_OK


def _figure_path(out) -> Path:
    out = Path(out)
    return out.with_suffix(".png") if out.suffix else Path(str(out) + ".png")


def cmd_rate_exp(cfg: dict) -> int:
    config = RateExperimentConfig(
        law_mu=LawSpec.from_dict(cfg["law_mu"]),
        law_nu=LawSpec.from_dict(cfg["law_nu"]),
        kernel=KernelSpec(cfg["kernel"], float(cfg["sigma"])),
        cost=CostSpec(float(cfg["p"])),
        sizes=[int(s) for s in cfg["sizes"]],
        replications=int(cfg["replications"]),
        rate_params=RateParams(float(cfg["q_mu"]), float(cfg["p"]),
                               int(cfg["law_mu"]["dim"])),
        seed=RngSpec(int(cfg["seed"]), int(cfg["stream"])),
        oracle=cfg["oracle"],
        k=int(cfg["k"]),
        n_ref_multiplier=int(cfg["n_ref_multiplier"]),
    )
    result = run_rate_experiment(config, threads=int(cfg["threads"]))
    sys.stdout.write(
        f"fitted_slope {result.fitted_slope!r} (se {result.slope_se!r}) "
        f"predicted {result.predicted_slope!r}\n"
    )
    payload = {
        "config": _echo(cfg),
        "oracle_value": result.oracle_value,
        "fitted_slope": result.fitted_slope,
        "slope_se": result.slope_se,
        "predicted_slope": result.predicted_slope,
        "reference_error": result.reference_error,
        "reference_flagged": result.reference_flagged,
        "table": [[r.n, r.mean_abs_error, r.mc_se, r.predicted_rate, r.replications]
                  for r in result.table],
    }
    comments = ["config: " + json.dumps(_echo(cfg), sort_keys=True),
                f"fitted_slope: {result.fitted_slope!r} (se {result.slope_se!r})",
                f"predicted_slope: {result.predicted_slope!r}"]
    _emit(cfg, payload, cfg.get("out"),
          lambda out: write_rate_csv(result, out, comments))
    if cfg.get("out") and cfg.get("figures", True):
        from .report import rate_figure
        rate_figure(result, _figure_path(cfg["out"]))
    return EXIT_OK


def cmd_clt_exp(cfg: dict) -> int:
    config = CltExperimentConfig(
        law_mu=LawSpec.from_dict(cfg["law_mu"]),
        law_nu=LawSpec.from_dict(cfg["law_nu"]),
        kernel=KernelSpec(cfg["kernel"], float(cfg["sigma"])),
        cost=CostSpec(float(cfg["p"])),
        m=int(cfg["m"]), n=int(cfg["n"]),
        replications=int(cfg["replications"]),
        alpha=float(cfg["alpha"]),
        k=int(cfg["k"]), k_eval=int(cfg["k_eval"]),
        split_fraction=float(cfg["split"]),
        seed=RngSpec(int(cfg["seed"]), int(cfg["stream"])),
        oracle=cfg["oracle"],
    )
    result = run_clt_experiment(config, threads=int(cfg["threads"]))
    sys.stdout.write(
        f"coverage_cost {result.coverage_cost!r} coverage_dist {result.coverage_dist!r} "
        f"ks {result.ks_distance!r}\n"
    )
    payload = {
        "config": _echo(cfg),
        "oracle_value": result.oracle_value,
        "coverage_cost": result.coverage_cost,
        "coverage_dist": result.coverage_dist,
        "ks_distance": result.ks_distance,
        "empirical_variance": result.empirical_variance,
        "median_tau2": result.median_tau2,
        "rows": [[r.replication, r.t_hat, r.tau2, r.standardized,
                  int(r.covered_cost), int(r.covered_dist)] for r in result.rows],
    }
    comments = ["config: " + json.dumps(_echo(cfg), sort_keys=True),
                f"oracle_value: {result.oracle_value!r}",
                f"coverage_cost: {result.coverage_cost!r}",
                f"coverage_dist: {result.coverage_dist!r}",
                f"ks_distance: {result.ks_distance!r}"]
    _emit(cfg, payload, cfg.get("out"),
          lambda out: write_clt_csv(result, out, comments))
    if cfg.get("out") and cfg.get("figures", True):
        from .report import clt_figure
        clt_figure(result, _figure_path(cfg["out"]))
    return EXIT_OK


def cmd_sigma_sweep(cfg: dict) -> int:
    config = SigmaSweepConfig(
        law_mu=LawSpec.from_dict(cfg["law_mu"]),
        law_nu=LawSpec.from_dict(cfg["law_nu"]) if cfg["law_nu"] else None,
        sigmas=[float(s) for s in cfg["sigmas"]],
        cost=CostSpec(float(cfg["p"])),
        m=int(cfg["m"]), n=int(cfg["n"]),
        k=int(cfg["k"]), paired=bool(cfg["paired"]),
        split_fraction=float(cfg["split"]),
        spread_streams=int(cfg["spread_streams"]),
        seed=RngSpec(int(cfg["seed"]), int(cfg["stream"])),
    )
    rows = run_sigma_sweep(config, threads=int(cfg["threads"]))
    for row in rows:
        sys.stdout.write(f"sigma {row.sigma!r} t_hat {row.t_hat!r}\n")
    payload = {
        "config": _echo(cfg),
        "rows": [[r.sigma, r.t_hat, r.tau2, r.seed_spread] for r in rows],
    }
    comments = ["config: " + json.dumps(_echo(cfg), sort_keys=True)]
    _emit(cfg, payload, cfg.get("out"),
          lambda out: write_sigma_csv(rows, out, comments))
    if cfg.get("out") and cfg.get("figures", True):
        from .report import sigma_figure
        sigma_figure(rows, _figure_path(cfg["out"]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(sp, *, inputs: bool, smoothing: bool, threads: bool = False):
    sp.add_argument("--config", help="TOML or JSON config file (defaults < file < flags)")
    sp.add_argument("--out", help="output artifact path; stdout JSON if omitted")
    sp.add_argument("--format", choices=["json", "csv"], default=None,
                    help="artifact format")
    sp.add_argument("--p", type=float, default=None, help="transport order p >= 1")
    if inputs:
        sp.add_argument("mu", nargs="?", default=None, help="source points CSV")
        sp.add_argument("nu", nargs="?", default=None, help="target points CSV")
    if smoothing:
        sp.add_argument("--sigma", type=float, default=None, help="smoothing bandwidth")
        sp.add_argument("--k", type=int, default=None, help="kernel draws per data point")
        sp.add_argument("--seed", type=int, default=None, help="master seed")
        sp.add_argument("--kernel", choices=["gaussian", "laplace-product"],
                        default=None, help="smoothing kernel family")
    if threads:
        sp.add_argument("--threads", type=int, default=None,
                        help="replication parallelism cap (results independent of it)")
        sp.add_argument("--figures", action=argparse.BooleanOptionalAction, default=None,
                        help="render a PNG figure next to the artifact")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smoothot",
        description="Exact optimal transport with Gaussian smoothing: "
                    "estimation, inference, testing, and rate/CLT studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ot", help="exact transport cost between two CSV point clouds")
    _add_common(sp, inputs=True, smoothing=False)

    sp = sub.add_parser("smooth-cost", help="smoothed-cost estimate between two samples")
    _add_common(sp, inputs=True, smoothing=True)

    sp = sub.add_parser("infer", help="Wald intervals via split-sample variance")
    _add_common(sp, inputs=True, smoothing=True)
    sp.add_argument("--split", type=float, default=None, help="train fraction in (0,1)")
    sp.add_argument("--alpha", type=float, default=None, help="interval level alpha")

    sp = sub.add_parser("test", help="two-sample separation test")
    _add_common(sp, inputs=True, smoothing=True)
    sp.add_argument("--q-mu", type=float, default=None, help="moment order of the source law")
    sp.add_argument("--q-nu", type=float, default=None, help="moment order of the target law")
    sp.add_argument("--threshold-mult", type=float, default=None,
                    help="threshold multiplier (> 0)")

    sp = sub.add_parser("rate-exp", help="empirical convergence-rate study")
    _add_common(sp, inputs=False, smoothing=True, threads=True)
    sp.add_argument("--q-mu", type=float, default=None,
                    help="moment order annotating the predicted rate")

    sp = sub.add_parser("clt-exp", help="coverage and normality study")
    _add_common(sp, inputs=False, smoothing=True, threads=True)
    sp.add_argument("--split", type=float, default=None, help="train fraction in (0,1)")
    sp.add_argument("--alpha", type=float, default=None, help="interval level alpha")

    sp = sub.add_parser("sigma-sweep", help="observational sweep over bandwidths")
    _add_common(sp, inputs=False, smoothing=True, threads=True)
    sp.add_argument("--split", type=float, default=None, help="train fraction in (0,1)")

    return parser


_DISPATCH = {
    "ot": cmd_ot,
    "smooth-cost": cmd_smooth_cost,
    "infer": cmd_infer,
    "test": cmd_test,
    "rate-exp": cmd_rate_exp,
    "clt-exp": cmd_clt_exp,
    "sigma-sweep": cmd_sigma_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args.command, args)
        if getattr(args, "out", None) is not None:
            cfg["out"] = args.out
        return _DISPATCH[args.command](cfg)
    except NullProximityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NULL
    except (InputError, OracleUnavailableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, DegenerateVarianceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
