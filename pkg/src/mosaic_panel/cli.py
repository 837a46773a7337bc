"""``mosaic`` command line: test, ci, diagnose and simulate.

Every JSON artifact carries the resolved configuration and seed. Exit codes:
0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .diagnostics import builtin_methods, run_diagnostics
from .engine import mosaic_test
from .exceptions import NumericalError, ValidationError
from .inference import mosaic_ci
from .invariance import InvarianceKind, parse_invariance
from .io import merge_small_clusters, read_long
from .rng import normalize_seed
from .simlab import (
    DgpSpec,
    Family,
    run_ci_coverage,
    run_null_calibration,
    run_randomization_vs_marginal,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

_INVARIANCE_HELP = (
    f"one of {', '.join(k.value for k in InvarianceKind if k is not InvarianceKind.CUSTOM)}, "
    "or custom:<path to CSV matrix>"
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _data_args(p: argparse.ArgumentParser, z_required: bool) -> None:
    p.add_argument("data", type=Path, help="long-format CSV: unit,time,y[,z][,x_*][,cluster]")
    p.add_argument("--z", required=z_required, help="column holding the covariate of interest")
    p.add_argument("--invariance", default="local-exchangeability", help=_INVARIANCE_HELP)
    p.add_argument("--unit-fe", action="store_true", help="append unit dummy covariates")
    p.add_argument("--time-fe", action="store_true", help="append time dummy covariates")
    p.add_argument(
        "--merge-clusters", type=int, default=None, metavar="K",
        help="merge the smallest clusters until each has at least K residual degrees of freedom",
    )


def _common_args(p: argparse.ArgumentParser, reps: int) -> None:
    p.add_argument("--reps", type=int, default=reps, help="number of randomizations R")
    p.add_argument("--seed", type=int, default=None, help="root seed (drawn from OS entropy if omitted)")
    p.add_argument("--output", type=Path, default=None, help="write JSON here instead of stdout")
    p.add_argument("--threads", type=int, default=1, help="cap on worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mosaic", description="Mosaic permutation tests and intervals for panel regressions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("test", help="test cluster independence of the regression errors")
    _data_args(p, z_required=False)
    _common_args(p, reps=999)
    p.add_argument("--statistic", choices=("signed", "absolute"), default="signed")
    p.add_argument("--weights", choices=("uniform",), default="uniform")

    p = sub.add_parser("ci", help="mosaic confidence interval for the coefficient on --z")
    _data_args(p, z_required=True)
    _common_args(p, reps=999)
    p.add_argument("--alpha", type=float, default=0.05)

    p = sub.add_parser("diagnose", help="split-sample standard-error diagnostics")
    _data_args(p, z_required=True)
    _common_args(p, reps=199)
    p.add_argument("--methods", nargs="+", default=["ols-homoskedastic", "ols-cluster", "mosaic-local-exchangeability"],
                   choices=sorted(builtin_methods()))
    p.add_argument("--splits", type=int, default=100)
    p.add_argument("--alpha", type=float, nargs="+", default=[0.05])
    p.add_argument("--coords", type=Path, default=None,
                   help="CSV with a cluster column and one or more coordinate columns")
    p.add_argument("--report-dir", type=Path, default=None,
                   help="directory for rows.csv and summary.json")

    p = sub.add_parser("simulate", help="Monte Carlo experiments on synthetic panels")
    p.add_argument("--experiment", choices=("calibration", "randomization", "coverage"), default="calibration")
    p.add_argument("--family", choices=[f.value for f in Family], default="robustness324")
    p.add_argument("--N", type=int, default=None, help="units (default 10 per cluster)")
    p.add_argument("--T", type=int, default=10)
    p.add_argument("--M", type=int, default=20)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--sims", type=int, default=500)
    p.add_argument("--invariance", default="local-exchangeability")
    p.add_argument("--alpha", type=float, default=0.1, help="coverage experiment only")
    _common_args(p, reps=199)
    p.add_argument("--table", type=Path, default=None, help="per-simulation CSV")
    p.add_argument("--histograms", type=Path, default=None, help="histogram CSV (randomization experiment)")
    return parser


def _load(args) -> tuple:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ing = read_long(args.data, z=args.z, unit_fe=args.unit_fe, time_fe=args.time_fe)
    P = parse_invariance(args.invariance, ing.panel.T)
    panel, merges = ing.panel, []
    if args.merge_clusters is not None:
        if args.merge_clusters < 1:
            raise ValidationError("--merge-clusters needs K >= 1")
        panel, merges = merge_small_clusters(panel, P, args.merge_clusters, z=ing.z)
    config = {
        "command": args.command,
        "data": str(args.data),
        "invariance": args.invariance,
        "z": args.z,
        "unit_fe": args.unit_fe,
        "time_fe": args.time_fe,
        "merge_clusters": args.merge_clusters,
        "merged": [list(m) for m in merges],
        "covariates": list(ing.covariate_names),
        "N": panel.N, "T": panel.T, "M": panel.M,
        "time_kind": ing.time_kind,
        "notes": list(ing.notes),
        "threads": args.threads,
    }
    return ing, panel, P, config


def _controls(panel, ing):
    """Controls for ``test``: the covariate of interest is a regressor like the others."""
    if ing.z is None:
        return panel
    X = np.concatenate([ing.z[None], panel.X])
    return type(panel)(panel.Y, X, panel.clustering, panel.unit_ids, panel.time_ids)


def _emit(payload: dict, path: Path | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=False, default=_json_default)
    if path is None:
        sys.stdout.write(text + "\n")
    else:
        path.write_text(text + "\n", encoding="utf-8")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def cmd_test(args) -> dict:
    ing, panel, P, config = _load(args)
    seed = normalize_seed(args.seed)
    res = mosaic_test(_controls(panel, ing), P, R=args.reps, seed=seed, two_sided=args.statistic == "absolute")
    config.update(R=args.reps, seed=seed, statistic=args.statistic, weights=args.weights)
    return {**res.to_dict(), "config": config, "time_order": list(ing.time_order)}


def cmd_ci(args) -> dict:
    ing, panel, P, config = _load(args)
    seed = normalize_seed(args.seed)
    res = mosaic_ci(panel.Y, ing.z, panel.X, panel.clustering, P, alpha=args.alpha, R=args.reps, seed=seed)
    config.update(R=args.reps, seed=seed, alpha=args.alpha)
    return {**res.to_dict(), "config": config, "time_order": list(ing.time_order)}


def _read_coords(path: Path, panel) -> dict:
    df = pd.read_csv(path, dtype={"cluster": str})
    if "cluster" not in df.columns:
        raise ValidationError("coordinate file needs a 'cluster' column")
    vals = df.set_index("cluster")
    out = {}
    for m, lab in enumerate(panel.clustering.labels):
        parts = str(lab).split("+")
        if not all(p in vals.index for p in parts):
            continue
        out[m] = vals.loc[parts].to_numpy(dtype=float).mean(axis=0)
    return out


def cmd_diagnose(args) -> dict:
    ing, panel, P, config = _load(args)
    seed = normalize_seed(args.seed)
    coords = _read_coords(args.coords, panel) if args.coords else None
    report = run_diagnostics(
        panel, ing.z, methods=args.methods, n_splits=args.splits, alphas=args.alpha,
        seed=seed, coords=coords, feature=args.z, R=args.reps,
    )
    config.update(report.config, seed=seed, coords=str(args.coords) if args.coords else None)
    if args.report_dir is not None:
        args.report_dir.mkdir(parents=True, exist_ok=True)
        report.rows.to_csv(args.report_dir / "rows.csv", index=False)
        config["report_dir"] = str(args.report_dir)
    summary = report.summary.to_dict(orient="records")
    payload = {"summary": summary, "config": config, "time_order": list(ing.time_order)}
    if args.report_dir is not None:
        _emit(payload, args.report_dir / "summary.json")
    return payload


def cmd_simulate(args) -> dict:
    seed = normalize_seed(args.seed)
    N = args.N if args.N is not None else 10 * args.M
    spec = DgpSpec(N=N, T=args.T, M=args.M, family=args.family, rho=args.rho, seed=seed)
    payload = {"config": {**spec.to_dict(), "experiment": args.experiment, "R": args.reps,
                          "sims": args.sims, "invariance": args.invariance, "threads": args.threads}}
    if args.experiment == "calibration":
        res = run_null_calibration(spec, R=args.reps, n_sims=args.sims, invariance=args.invariance)
        payload.update(rejection=res.table.to_dict(orient="records"), ks_distance=res.ks_distance)
        table = res.per_sim_frame()
    elif args.experiment == "randomization":
        res = run_randomization_vs_marginal(spec, R=args.reps, n_sims=args.sims, invariance=args.invariance)
        payload.update(
            moments=res.moment_table().to_dict(orient="records"),
            quantile_gaps=res.quantile_gaps().to_dict(orient="records"),
            skewness_mc=res.skewness_mc, skewness_rand=res.skewness_rand,
        )
        table = pd.DataFrame({"delta_mc": res.delta_mc})
        if args.histograms is not None:
            res.histograms().to_csv(args.histograms, index=False)
    else:
        res = run_ci_coverage(spec, alpha=args.alpha, R=args.reps, n_sims=args.sims, invariance=args.invariance)
        payload.update(coverage=res.coverage, alpha=args.alpha)
        table = res.per_sim_frame()
    if args.table is not None:
        table.to_csv(args.table, index=False)
    return payload


COMMANDS = {"test": cmd_test, "ci": cmd_ci, "diagnose": cmd_diagnose, "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.reps < 1:
        print("mosaic: error: --reps must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    if args.threads < 1:
        print("mosaic: error: --threads must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        payload = COMMANDS[args.command](args)
    except (ValidationError, FileNotFoundError, ValueError) as exc:
        print(f"mosaic: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"mosaic: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _emit(payload, args.output)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
