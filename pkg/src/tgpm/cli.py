"""``tgpm`` command line: estimate, backtest, ldf-grid and simulate.

Exit codes: 0 success, 1 data or estimation error, 2 usage error. Every
output file gets a ``<output>.manifest.json`` sidecar recording the resolved
flags, input digests, seed, version and a timestamp.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .data import (
    ReturnsMatrix,
    load_ff_industry,
    load_price_csv,
    load_returns_csv,
    log_returns,
    simulate_t,
    write_returns_csv,
)
from .errors import TgpmError
from .gpm import GpmKind, estimate
from .ldf import TStudentParams, ldf_grid
from .portfolio import AGGREGATIONS, FALLBACK_POLICIES, BacktestConfig, rolling_backtest

FORMATS = ("csv", "ff", "prices")


def _atomic_write(path: str, content: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        fh.write(content)
    os.replace(tmp, path)


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(output: str, subcommand: str, config: dict, inputs: list[str], seed: int | None) -> str:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "inputs": {os.path.basename(p): file_digest(p) for p in inputs},
        "seed": seed,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path = f"{output}.manifest.json"
    _atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_input(path: str, fmt: str) -> ReturnsMatrix:
    if fmt == "ff":
        return load_ff_industry(path)
    if fmt == "prices":
        return log_returns(load_price_csv(path))
    return load_returns_csv(path)


def _pair(text: str) -> tuple[int, int]:
    try:
        p, q = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'p,q', got {text!r}") from None
    return p, q


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _config_dict(args: argparse.Namespace) -> dict:
    skip = {"func", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def cmd_estimate(args: argparse.Namespace) -> int:
    panel = load_input(args.input, args.format)
    est = estimate(
        args.estimator,
        panel,
        args.nu,
        region_threshold=args.region_threshold,
        pair=args.pair,
        demean=args.demean,
        scatter_rescale=args.scatter_rescale,
    )
    _atomic_write(args.output, est.to_json())
    write_manifest(args.output, "estimate", _config_dict(args), [args.input], None)
    print(f"wrote {est.kind.value} estimate ({est.dim}x{est.dim}, n={est.n}) to {args.output}")
    return 0


def cmd_backtest(args: argparse.Namespace) -> int:
    panel = load_input(args.input, args.format)
    config = BacktestConfig(
        window_size=args.ws,
        rebalance_period=args.tau,
        nu_list=tuple(args.nu or [6.0]),
        estimators=tuple(e.strip() for e in args.estimators.split(",") if e.strip()),
        region_threshold=args.region_threshold,
        region_pair=args.pair,
        annualization_factor=args.annualization,
        fallback_policy=args.fallback,
        aggregate=args.aggregate,
        demean=args.demean,
        scatter_rescale=args.scatter_rescale,
        seed=args.seed,
        lw_reps=args.lw_reps,
    )
    report = rolling_backtest(panel, config)
    os.makedirs(args.outdir, exist_ok=True)
    for name, content in report.files().items():
        _atomic_write(os.path.join(args.outdir, name), content)
    write_manifest(os.path.join(args.outdir, "report.json"), "backtest", _config_dict(args), [args.input], args.seed)
    print(f"T={report.T} N={len(report.assets)} M={report.M}")
    print(report.table())
    for run in report.runs.values():
        if run.test_notice:
            print(f"{run.label}: {run.test_notice}")
    return 0


def cmd_ldf_grid(args: argparse.Namespace) -> int:
    lo, hi = args.range
    grid = ldf_grid(
        TStudentParams.bivariate(args.rho, args.nu),
        axes=((lo, hi, args.steps), (lo, hi, args.steps)),
    )
    _atomic_write(args.output, grid.to_csv_text())
    write_manifest(args.output, "ldf-grid", _config_dict(args), [], None)
    print(f"wrote {args.steps}x{args.steps} grid to {args.output}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.sigma_file:
        sigma = np.loadtxt(args.sigma_file, delimiter=None if args.sigma_file.endswith(".txt") else ",", ndmin=2)
        inputs = [args.sigma_file]
    else:
        d = args.d
        sigma = np.full((d, d), args.rho) + (1.0 - args.rho) * np.eye(d)
        inputs = []
    params = TStudentParams(np.zeros(sigma.shape[0]), sigma, args.nu)
    panel = simulate_t(args.n, params, args.seed)
    tmp = f"{args.output}.tmp{os.getpid()}"
    write_returns_csv(panel, tmp)
    os.replace(tmp, args.output)
    write_manifest(args.output, "simulate", _config_dict(args), inputs, args.seed)
    print(f"wrote {args.n}x{params.d} panel to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tgpm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def data_flags(p):
        p.add_argument("--input", required=True)
        p.add_argument("--format", choices=FORMATS, default="csv")
        p.add_argument("--demean", action=argparse.BooleanOptionalAction, default=True)
        p.add_argument("--scatter-rescale", action="store_true")
        p.add_argument("--region-threshold", type=float)
        p.add_argument("--pair", type=_pair, default=(0, 1))

    p = sub.add_parser("estimate", help="estimate one precision matrix from a returns panel")
    data_flags(p)
    p.add_argument("--estimator", choices=[k.flag for k in GpmKind], default="signed")
    p.add_argument("--nu", type=_positive, default=6.0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("backtest", help="rolling-window minimum-variance backtest")
    data_flags(p)
    p.add_argument("--ws", type=int, default=250)
    p.add_argument("--tau", type=int, default=21)
    p.add_argument("--nu", type=_positive, action="append")
    p.add_argument("--estimators", default="inv,signed,abs,taylor")
    p.add_argument("--annualization", type=_positive)
    p.add_argument("--fallback", choices=FALLBACK_POLICIES, default="hold-previous")
    p.add_argument("--aggregate", choices=AGGREGATIONS, default="compound")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--lw-reps", type=int, default=4999)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("ldf-grid", help="bivariate t LDF on a grid, as x,y,gamma CSV")
    p.add_argument("--nu", type=_positive, default=6.0)
    p.add_argument("--rho", type=float, default=0.7)
    p.add_argument("--range", type=float, nargs=2, default=(-4.0, 4.0), metavar=("MIN", "MAX"))
    p.add_argument("--steps", type=int, default=101)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_ldf_grid)

    p = sub.add_parser("simulate", help="draw a multivariate t returns panel")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--nu", type=_positive, default=6.0)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--rho", type=float, default=0.0)
    group.add_argument("--sigma-file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_simulate)
    return parser


def _validate(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    if args.command == "ldf-grid":
        if not abs(args.rho) < 1:
            parser.error(f"--rho must satisfy |rho| < 1, got {args.rho}")
        if args.steps < 2:
            parser.error("--steps must be >= 2")
        if not args.range[0] < args.range[1]:
            parser.error("--range MIN must be below MAX")
    elif args.command == "simulate":
        if args.n < 1 or args.d < 1:
            parser.error("--n and --d must be >= 1")
        if args.sigma_file is None and args.d > 1 and not -1.0 / (args.d - 1) < args.rho < 1.0:
            parser.error(f"--rho {args.rho} does not give a positive definite {args.d}x{args.d} matrix")
    elif args.command == "estimate":
        if args.estimator == "region" and args.region_threshold is None:
            parser.error("--estimator region needs --region-threshold")
    elif args.command == "backtest":
        if args.ws < 2 or args.tau < 1:
            parser.error("--ws must be >= 2 and --tau >= 1")
        try:
            for e in args.estimators.split(","):
                if e.strip():
                    GpmKind.parse(e)
        except ValueError as exc:
            parser.error(str(exc))
        if "region" in args.estimators and args.region_threshold is None:
            parser.error("region estimator needs --region-threshold")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    try:
        return args.func(args)
    except (TgpmError, OSError, ValueError) as exc:
        print(f"tgpm {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
