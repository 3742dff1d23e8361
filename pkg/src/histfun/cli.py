"""Batch command-line front end: simulate, fit, tune, bootstrap, report.

Every command is a pure function of its inputs, flags, and seed; outputs are
CSV and JSON files written into --out.  Log verbosity is controlled by the
HISTFUN_LOG environment variable (DEBUG/INFO/WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import estimator, simulation
from .design import read_sample_csv, write_sample_csv
from .exceptions import HistfunError
from .fem import CoefficientSurface, build_mesh
from .solver import BridgeConfig
from .tuning import TuningGrid

logger = logging.getLogger(__name__)


def _setup_logging():
    level = os.environ.get("HISTFUN_LOG", "WARNING").upper()
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _parse_float_list(text: str) -> list:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _tuning_grid(args) -> TuningGrid:
    if args.lambda_grid:
        lambdas = np.array(_parse_float_list(args.lambda_grid))
    else:
        lambdas = np.logspace(-4, 1, 8)
    if args.omega_grid:
        omegas = _parse_float_list(args.omega_grid)
    else:
        omegas = list(np.logspace(-6, -1, 4))
    return TuningGrid(lambdas=lambdas, omegas=omegas)


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    ss = np.random.SeedSequence(args.seed)
    scen_seed, x_seed, y_seed = ss.spawn(3)
    scenario = simulation.make_scenario(
        args.scenario, delta=args.delta, epsilon=args.epsilon, seed=scen_seed
    )
    grid = np.linspace(0.0, 1.0, args.grid_points)
    x = simulation.gen_covariates(args.N, grid, seed=x_seed)
    y = simulation.gen_response(x, scenario, args.sigma, seed=y_seed)
    write_sample_csv(out / "x.csv", x)
    write_sample_csv(out / "y.csv", y)
    truth = {
        "scenario": {
            "id": scenario.id,
            "delta_true": scenario.delta_true,
            "epsilon": scenario.epsilon,
            "holes": [list(h) for h in scenario.holes],
            "amplitude": scenario.amplitude,
        },
        "sigma": args.sigma,
        "N": args.N,
        "seed": args.seed,
    }
    with open(out / "truth.json", "w") as fh:
        json.dump(truth, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return 0


def cmd_fit(args) -> int:
    out = _out_dir(args)
    x = read_sample_csv(args.in_x, role="covariate")
    y = read_sample_csv(args.in_y, role="response")
    fit = estimator.fit_historical_model(
        x,
        y,
        args.M,
        args.lam,
        args.omega,
        gamma=args.gamma,
        lag_rule=args.lag_rule,
    )
    estimator.save_fit_json(fit, out / "fit.json")
    estimator.write_beta_grid_csv(fit.beta_hat, out / "beta_grid.csv")
    return 0


def cmd_tune(args) -> int:
    out = _out_dir(args)
    x = read_sample_csv(args.in_x, role="covariate")
    y = read_sample_csv(args.in_y, role="response")
    grid = _tuning_grid(args)
    fit = estimator.tune_historical_model(
        x, y, args.M, grid=grid, gamma=args.gamma, lag_rule=args.lag_rule
    )
    estimator.save_fit_json(fit, out / "fit.json")
    estimator.write_beta_grid_csv(fit.beta_hat, out / "beta_grid.csv")
    with open(out / "tuning.csv", "w") as fh:
        fh.write("lambda,omega_h,omega_v,omega_p,df,bic,delta_group,rss,n_active\n")
        for rec in grid.records:
            dg = "" if rec.delta_group is None else rec.delta_group
            fh.write(
                f"{rec.lam:.17g},{rec.omega[0]:.17g},{rec.omega[1]:.17g},"
                f"{rec.omega[2]:.17g},{rec.df:.17g},{rec.bic:.17g},{dg},"
                f"{rec.rss:.17g},{rec.n_active}\n"
            )
    return 0


def cmd_bootstrap(args) -> int:
    out = _out_dir(args)
    x = read_sample_csv(args.in_x, role="covariate")
    y = read_sample_csv(args.in_y, role="response")
    payload = estimator.load_fit_json(args.fit)
    fit = estimator.fit_historical_model(
        x,
        y,
        payload["M"],
        payload["lambda"],
        tuple(payload["omega"]),
        gamma=payload["gamma"],
        lag_rule=payload.get("lag_rule", "upper"),
    )
    boot = estimator.bootstrap_delta_ci(
        fit, x, y, args.B, level=args.level, seed=args.seed, n_jobs=args.threads
    )
    ci = {
        "delta_hat": fit.delta_hat,
        "lower": boot.lower,
        "upper": boot.upper,
        "level": boot.level,
        "B": args.B,
        "n_failed": boot.n_failed,
        "seed": args.seed,
    }
    with open(out / "ci.json", "w") as fh:
        json.dump(ci, fh, sort_keys=True, indent=1)
        fh.write("\n")
    np.savetxt(out / "deltas.csv", boot.deltas, delimiter=",", fmt="%.17g")
    return 0


def cmd_report(args) -> int:
    out = _out_dir(args)
    with open(args.truth) as fh:
        truth = json.load(fh)
    spec = truth["scenario"]
    scenario = simulation.Scenario(
        id=spec["id"],
        delta_true=spec["delta_true"],
        epsilon=spec["epsilon"],
        holes=tuple(tuple(h) for h in spec["holes"]),
        amplitude=spec["amplitude"],
    )
    fits = []
    for path in args.fits:
        payload = estimator.load_fit_json(path)
        mesh = build_mesh(payload["M"], payload["T"])
        surface = CoefficientSurface(mesh=mesh, coefficients=np.array(payload["b"]))
        fits.append(
            SimpleNamespace(delta_hat=payload["delta_hat"], beta_hat=surface)
        )
    report = simulation.evaluate(fits, scenario)
    with open(out / "metrics.csv", "w") as fh:
        fh.write(
            "n,delta_true,rmse_delta,pct_bias_delta,sd_delta,rise_mean,rise_sd\n"
        )
        fh.write(
            f"{report.n_replications},{scenario.delta_true:.17g},"
            f"{report.rmse_delta:.17g},{report.pct_bias_delta:.17g},"
            f"{report.sd_delta:.17g},{report.rise_mean:.17g},"
            f"{report.rise_sd:.17g}\n"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="histfun",
        description="Lagged function-on-function regression via a nested group bridge",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--scenario", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--N", type=int, default=32)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--grid-points", type=int, default=65)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit at fixed tuning parameters")
    p.add_argument("--in-x", required=True)
    p.add_argument("--in-y", required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--lam", type=float, default=0.01)
    p.add_argument("--omega", type=float, default=1e-4)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--lag-rule", choices=estimator.LAG_RULES, default="upper")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("tune", help="select tuning parameters by BIC, then fit")
    p.add_argument("--in-x", required=True)
    p.add_argument("--in-y", required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--lambda-grid", default="")
    p.add_argument("--omega-grid", default="")
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--lag-rule", choices=estimator.LAG_RULES, default="upper")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("bootstrap", help="residual bootstrap CI for the lag")
    p.add_argument("--in-x", required=True)
    p.add_argument("--in-y", required=True)
    p.add_argument("--fit", required=True, help="fit.json from fit or tune")
    p.add_argument("--B", type=int, default=200)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("report", help="aggregate replicate fits into metrics")
    p.add_argument("--truth", required=True)
    p.add_argument("--fits", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HistfunError as exc:
        json.dump(
            {"error": type(exc).__name__, "message": str(exc)},
            sys.stderr,
        )
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
