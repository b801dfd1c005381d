"""Command-line interface.

Subcommands: ``simulate`` (emit a sample-set CSV), ``estimate`` (one dataset
to an estimate JSON), ``benchmark`` (experiment config to a metric report),
``fbar-curve`` (regularization-analysis curve data) and ``tune-lambda``.
Report paths also render PNG figures next to the delimited output unless
``--no-plot`` is given.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import harness, plots
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateSampleError,
    DivergenceError,
    InvalidInputError,
    ReportIOError,
    SingularMatrixError,
)
from .matrix_core import matrix_power
from .model import MggdParams, PerturbationSpec, perturb, read_sample_csv, sample_mggd
from .objective import FbarParams, fbar_curve, theta_hat_curve, write_curve_csv
from .objective import FBAR_CSV_HEADER, THETA_HAT_CSV_HEADER
from .objective import RegularizerSpec
from .solver import estimate as solve_estimate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robust-mggd",
        description="Robust joint estimation for perturbed generalized Gaussian samples",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a perturbed sample set and write it as CSV")
    p_sim.add_argument("--k", type=int, required=True, help="dimension")
    p_sim.add_argument("--n", type=int, required=True, help="number of samples")
    p_sim.add_argument("--beta", type=float, default=1.5)
    p_sim.add_argument("--precision", choices=["identity", "ar3", "dense", "uniform_sparse"],
                       default="identity", help="ground-truth precision family")
    p_sim.add_argument("--rho", type=float, default=0.5)
    p_sim.add_argument("--sparsity", type=float, default=0.9)
    p_sim.add_argument("--gen-seed", type=int, default=0,
                       help="seed of the uniform_sparse support")
    p_sim.add_argument("--ptau", type=float, default=0.0, help="corrupted proportion")
    p_sim.add_argument("--tau-max", type=float, default=1.0)
    p_sim.add_argument("--mu", choices=["zero", "normal"], default="normal")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("-o", "--output", required=True)

    p_est = sub.add_parser("estimate", help="run the estimator on one sample-set CSV")
    p_est.add_argument("input", help="sample-set CSV produced by 'simulate'")
    p_est.add_argument("--lam", type=float, default=0.0, help="l1 weight on the precision root")
    p_est.add_argument("--max-iter", type=int, default=10_000)
    p_est.add_argument("--tol-rel", type=float, default=1e-8)
    p_est.add_argument("--no-normalize", action="store_true",
                       help="solve on the raw data scale (slower on large-norm data)")
    p_est.add_argument("--trace", help="optional iteration-trace CSV path")
    p_est.add_argument("-o", "--output", required=True, help="estimate JSON path")

    p_bench = sub.add_parser("benchmark", help="run a Monte Carlo experiment config")
    p_bench.add_argument("--config", required=True, help="experiment config JSON")
    p_bench.add_argument("--output", help="override the config's output_path")
    p_bench.add_argument("--no-plot", action="store_true", help="skip PNG rendering")

    p_fbar = sub.add_parser("fbar-curve", help="emit regularization-analysis curve data")
    p_fbar.add_argument("--beta", type=float, default=1.7)
    p_fbar.add_argument("--kappa-bar", type=float, default=1.1)
    p_fbar.add_argument("--alpha", type=float, action="append",
                        help="repeatable; defaults to 1, 1.5, 2")
    p_fbar.add_argument("--theta-bar", type=float, default=1.0)
    p_fbar.add_argument("--grid-lo", type=float, default=1e-2)
    p_fbar.add_argument("--grid-hi", type=float, default=1e2)
    p_fbar.add_argument("--grid-points", type=int, default=400)
    p_fbar.add_argument("--with-unregularized", action="store_true",
                        help="add the kappa=0 reference curve")
    p_fbar.add_argument("--no-plot", action="store_true")
    p_fbar.add_argument("-o", "--output", required=True, help="output path prefix")

    p_tune = sub.add_parser("tune-lambda", help="bisect lambda to a target sparsity")
    p_tune.add_argument("--config", required=True, help="experiment config JSON")
    p_tune.add_argument("--target", type=float, required=True,
                        help="desired off-diagonal zero fraction")
    p_tune.add_argument("-o", "--output", help="optional JSON result path")

    return parser


def _cmd_simulate(args) -> int:
    if args.precision == "identity":
        scatter = np.eye(args.k)
    else:
        kind = harness.PrecisionKind(
            kind=args.precision, rho=args.rho, sparsity=args.sparsity, seed=args.gen_seed
        )
        scatter = matrix_power(harness.generate_precision(kind, args.k), -1.0)
    seeds = np.random.SeedSequence(args.seed).generate_state(3)
    if args.mu == "normal":
        mu = np.random.default_rng(seeds[0]).standard_normal(args.k)
    else:
        mu = np.zeros(args.k)
    centered = MggdParams(args.beta, np.zeros(args.k), scatter)
    x = sample_mggd(centered, args.n, int(seeds[1]))
    params = MggdParams(args.beta, mu, scatter)
    spec = PerturbationSpec(args.ptau, args.tau_max, seed=int(seeds[2]))
    sample = perturb(x, params, spec)
    _ensure_parent(args.output)
    sample.write_csv(args.output)
    print(f"wrote {args.output} (K={args.k}, N={args.n}, beta={args.beta:g})")
    return EXIT_OK


def _cmd_estimate(args) -> int:
    y, _, beta = read_sample_csv(args.input)
    k = y.shape[0]
    spec = RegularizerSpec.default(k, beta, lam=args.lam if args.lam > 0 else None)
    result = solve_estimate(
        y, beta, spec,
        normalize=not args.no_normalize,
        max_iter=args.max_iter,
        tol_rel=args.tol_rel,
    )
    diag = result.diagnostics
    payload = {
        "beta": beta,
        "mu": result.mu.tolist(),
        "scatter": result.scatter.tolist(),
        "precision": result.precision.tolist(),
        "covariance": result.covariance.tolist(),
        "tau": result.tau.tolist(),
        "diagnostics": {
            "iterations": int(diag.iterations),
            "converged": bool(diag.converged),
            "final_cost": float(diag.primal_cost_trace[-1]),
            "final_rel_change": float(diag.rel_change_trace[-1])
            if len(diag.rel_change_trace)
            else None,
        },
    }
    _ensure_parent(args.output)
    try:
        with open(args.output, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        if args.trace:
            _ensure_parent(args.trace)
            diag.write_csv(args.trace)
    except OSError as exc:
        raise ReportIOError(f"cannot write {args.output}: {exc}", path=args.output) from exc
    print(
        f"estimate written to {args.output} "
        f"({diag.iterations} iterations, converged={diag.converged})"
    )
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    cfg = harness.load_config(args.config)
    if args.output:
        cfg = harness.ExperimentConfig(
            K=cfg.K, N=cfg.N, beta=cfg.beta, precision_kind=cfg.precision_kind,
            perturbation=cfg.perturbation, n_mc=cfg.n_mc, estimators=cfg.estimators,
            output_path=args.output, master_seed=cfg.master_seed,
        )
    report = harness.run_monte_carlo(cfg)
    csv_path, json_path = harness.emit_report(report, cfg.output_path)
    written = [csv_path, json_path]
    if not args.no_plot:
        png_path = harness.report_base_path(cfg.output_path) + ".png"
        try:
            plots.render_benchmark(report, png_path)
        except OSError as exc:
            raise ReportIOError(f"cannot write {png_path}: {exc}", path=png_path) from exc
        written.append(png_path)
    print("wrote " + ", ".join(written))
    return EXIT_OK


def _cmd_fbar_curve(args) -> int:
    alphas = args.alpha if args.alpha else [1.0, 1.5, 2.0]
    grid = np.logspace(np.log10(args.grid_lo), np.log10(args.grid_hi), args.grid_points)
    params = [
        FbarParams(beta=args.beta, alpha=a, kappa_bar=args.kappa_bar,
                   theta_bar=args.theta_bar)
        for a in alphas
    ]
    if args.with_unregularized:
        params.append(FbarParams(beta=args.beta, alpha=1.0, kappa_bar=0.0,
                                 theta_bar=args.theta_bar))
    rows = fbar_curve(params, grid)
    that_rows = []
    tbar_grid = np.logspace(np.log10(max(args.grid_lo, 1e-2)), np.log10(args.grid_hi),
                            args.grid_points)
    for a in alphas:
        that_rows.extend(theta_hat_curve(args.beta, a, args.kappa_bar, tbar_grid))
    if args.with_unregularized:
        that_rows.extend(theta_hat_curve(args.beta, 1.0, 0.0, tbar_grid))

    base = args.output
    _ensure_parent(base + "_fbar.csv")
    try:
        write_curve_csv(rows, FBAR_CSV_HEADER, base + "_fbar.csv")
        write_curve_csv(that_rows, THETA_HAT_CSV_HEADER, base + "_theta_hat.csv")
        written = [base + "_fbar.csv", base + "_theta_hat.csv"]
        if not args.no_plot:
            plots.render_fbar_curves(rows, base + "_fbar.png")
            plots.render_theta_hat_curves(that_rows, base + "_theta_hat.png")
            written += [base + "_fbar.png", base + "_theta_hat.png"]
    except OSError as exc:
        raise ReportIOError(f"cannot write curves at {base}: {exc}", path=base) from exc
    print("wrote " + ", ".join(written))
    return EXIT_OK


def _cmd_tune_lambda(args) -> int:
    cfg = harness.load_config(args.config)
    result = harness.tune_lambda(cfg, args.target)
    payload = {
        "lambda": result.lam,
        "sparsity": result.sparsity,
        "target": result.target,
        "warning": result.warning,
        "n_evals": result.n_evals,
    }
    if args.output:
        _ensure_parent(args.output)
        try:
            with open(args.output, "w") as fh:
                json.dump(payload, fh, indent=2)
                fh.write("\n")
        except OSError as exc:
            raise ReportIOError(f"cannot write {args.output}: {exc}",
                                path=args.output) from exc
    flag = " (warning: target not reached)" if result.warning else ""
    print(f"lambda={result.lam:.6g} sparsity={result.sparsity:.4f}{flag}")
    return EXIT_OK


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        try:
            os.makedirs(parent, exist_ok=True)
        except OSError as exc:
            raise ReportIOError(f"cannot create directory {parent}: {exc}",
                                path=parent) from exc


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "benchmark": _cmd_benchmark,
    "fbar-curve": _cmd_fbar_curve,
    "tune-lambda": _cmd_tune_lambda,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, InvalidInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, DivergenceError, SingularMatrixError,
            DegenerateSampleError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ReportIOError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
