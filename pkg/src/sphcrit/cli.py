"""Command-line entry point: ``sphcrit <subcommand> [flags]``.

Every subcommand writes its outputs into an output directory (``--out-dir``,
or the ``SPHCRIT_OUTPUT_DIR`` environment variable, or the working
directory) together with a ``<name>.manifest.json`` describing the run.
The exit status is 0 only when the self-checks of the invoked path pass.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
from importlib import metadata

import numpy as np
import scipy

from . import analytic, kernels
from .analytic import Interval
from .critical import FinderConfig, IncompleteCensusError, census_to_csv, find_critical_points
from .experiments import (
    EnsembleAbort,
    ExperimentConfig,
    covariance_diagnostic,
    records_from_csv,
    records_to_csv,
    run_ensemble,
    summarize,
    summary_to_json,
    verify_clt,
    verify_full_correlation,
    verify_reduction,
    to_jsonable,
)
from .field import HarmonicCoefficients, sample_coefficients

OUTPUT_ENV = "SPHCRIT_OUTPUT_DIR"


def _versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"package": pkg, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "kernel_backend": kernels.BACKEND}


def _out_dir(args) -> str:
    d = args.out_dir or os.environ.get(OUTPUT_ENV) or "."
    os.makedirs(d, exist_ok=True)
    return d


def _write(args, name: str, text: str, config: dict, master_seed=None) -> str:
    """Write an output file and its manifest; return the output path."""
    path = name if os.path.isabs(name) else os.path.join(_out_dir(args), name)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    manifest = {
        "subcommand": args.command,
        "output": os.path.basename(path),
        "config": config,
        "master_seed": master_seed,
        "versions": _versions(),
    }
    with open(path + ".manifest.json", "w") as fh:
        fh.write(json.dumps(to_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return path


def _interval(text: str) -> Interval:
    try:
        return Interval.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_ell(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("ell must be >= 1")
    return v


def _grid(text: str):
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError("grid must look like 'lo:hi:n'") from None
    if n < 2 or not hi > lo:
        raise argparse.ArgumentTypeError("grid needs hi > lo and n >= 2")
    return lo, hi, n


# subcommands -----------------------------------------------------------------------

def cmd_sample(args) -> int:
    coeffs = sample_coefficients(args.ell, args.seed)
    text = coeffs.to_json() + "\n"
    # self-check: the file round-trips
    ok = HarmonicCoefficients.from_json(text) == coeffs
    path = _write(args, args.out or f"coeffs_l{args.ell}_s{args.seed}.json", text,
                  {"ell": args.ell, "seed": args.seed}, args.seed)
    print(path)
    return 0 if ok else 1


def cmd_census(args) -> int:
    if args.coeffs:
        with open(args.coeffs) as fh:
            coeffs = HarmonicCoefficients.from_json(fh.read())
    elif args.ell is not None and args.seed is not None:
        coeffs = sample_coefficients(args.ell, args.seed)
    else:
        print("census: give --coeffs or both --ell and --seed", file=sys.stderr)
        return 2
    cfg = FinderConfig(kappa=args.kappa)
    ok = True
    try:
        census = find_critical_points(coeffs, cfg)
    except IncompleteCensusError as exc:
        census = exc.census
        ok = False
    n_max, n_min, n_saddle = census.counts
    name = args.out or f"census_l{coeffs.ell}.csv"
    _write(args, name, census_to_csv(census), {"ell": coeffs.ell, "seed": coeffs.seed,
                                               "finder": cfg.to_dict()}, coeffs.seed)
    print(f"ell={coeffs.ell} n_total={census.n_total} n_max={n_max} n_min={n_min} "
          f"n_saddle={n_saddle} euler={census.euler} (expected 2) "
          f"{'ok' if ok else 'INCOMPLETE'}", file=sys.stderr)
    return 0 if ok else 1


def cmd_densities(args) -> int:
    lo, hi, n = args.grid
    t = np.linspace(lo, hi, n)
    cols = ["t"] + list(analytic.DENSITIES)
    lines = [",".join(cols)]
    table = np.column_stack([t] + [np.asarray(analytic.DENSITIES[k](t), float) for k in analytic.DENSITIES])
    lines += [",".join(f"{x:.17g}" for x in row) for row in table]
    _write(args, args.out or "densities.csv", "\n".join(lines) + "\n",
           {"grid": [lo, hi, n]})
    total = analytic.interval_integral("pi_c", Interval.real_line())
    ok = abs(total - 1.0) <= 1e-10
    print(f"self-check: integral of pi_c over R = {total:.17g} ({'ok' if ok else 'FAILED'})",
          file=sys.stderr)
    return 0 if ok else 1


def cmd_predict(args) -> int:
    iv = args.interval
    out = {"ell": args.ell, "interval": str(iv),
           "expected_count": analytic.expected_count(args.ell, iv),
           "reduction_coefficient": analytic.reduction_coefficient(args.ell, iv)}
    if args.ell >= 2:
        out["variance_leading"] = analytic.variance_leading(args.ell, iv)
        out["variance_log_leading"] = analytic.variance_log_leading(args.ell, iv)
    else:
        out["variance_leading"] = None
        out["variance_log_leading"] = None
    text = json.dumps(to_jsonable(out), indent=2, sort_keys=True) + "\n"
    _write(args, args.out or f"predict_l{args.ell}.json", text, {"ell": args.ell, "interval": str(iv)})
    sys.stdout.write(text)
    return 0


def cmd_ensemble(args) -> int:
    with open(args.config) as fh:
        config = ExperimentConfig.from_json(fh.read())
    try:
        result = run_ensemble(config, threads=args.threads)
    except EnsembleAbort as exc:
        print(f"ensemble aborted: {exc}", file=sys.stderr)
        return 1
    cfg = config.to_dict()
    _write(args, config.records_path, records_to_csv(result.records, config.u_list), cfg, config.master_seed)
    _write(args, config.summary_path, summary_to_json(result.summary), cfg, config.master_seed)
    for ell, block in result.summary["by_ell"].items():
        mc = block["mean_total"]
        print(f"ell={ell} records={block['n_records']} mean_total={mc['empirical']:.6g} "
              f"(predicted {mc['predicted']:.6g}, stderr {mc['stderr']:.3g}) "
              f"excluded={block['diagnostics']['excluded']}", file=sys.stderr)
    return 0


def _config_from_records(records) -> ExperimentConfig:
    # the master seed is not recoverable from records; reported as null
    ells = tuple(sorted({r.ell for r in records}))
    intervals = {r.interval for r in records}
    if len(intervals) != 1:
        raise ValueError("records mix several intervals")
    return ExperimentConfig(ells=ells, interval=Interval.parse(intervals.pop()),
                            u_list=records[0].u_list, replicates=max(2, len(records)),
                            master_seed=None)


def cmd_verify(args) -> int:
    if args.which == "covariance":
        ell = args.ell or 5
        res = covariance_diagnostic(ell, args.n, args.seed, theta=args.theta)
        out = {k: res[k] for k in ("ell", "n", "theta", "max_abs_z", "cross_block_max_abs_z",
                                   "empirical", "predicted", "stderr")}
        text = json.dumps(to_jsonable(out), indent=2, sort_keys=True) + "\n"
        _write(args, args.out or "verify_covariance.json", text,
               {"ell": ell, "n": args.n, "seed": args.seed, "theta": args.theta}, args.seed)
        sys.stdout.write(text)
        return 0
    if not args.records:
        print("verify: --records is required", file=sys.stderr)
        return 2
    with open(args.records) as fh:
        records = records_from_csv(fh.read())
    if not records:
        print("verify: no records", file=sys.stderr)
        return 2
    if args.config:
        with open(args.config) as fh:
            config = ExperimentConfig.from_json(fh.read())
    else:
        config = _config_from_records(records)
    ell = args.ell or max(config.ells)
    try:
        if args.which == "summary":
            out = summarize(records, config)
        elif args.which == "reduction":
            out = verify_reduction(records, ell, config.interval)
        elif args.which == "clt":
            out = verify_clt(records, ell)
        else:
            out = verify_full_correlation(records, ell, args.u)
    except ValueError as exc:
        print(f"verify: {exc}", file=sys.stderr)
        return 1
    text = summary_to_json(out)
    _write(args, args.out or f"verify_{args.which}.json", text,
           {"records": os.path.basename(args.records), "which": args.which, "ell": ell,
            "config": os.path.basename(args.config) if args.config else None}, config.master_seed)
    sys.stdout.write(text)
    return 0


# parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sphcrit", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", help=f"output directory (default: ${OUTPUT_ENV} or .)")
    common.add_argument("--out", help="output file name inside the output directory")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", parents=[common], help="sample coefficients to JSON")
    s.add_argument("--ell", type=_positive_ell, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("census", parents=[common], help="critical points of one realization to CSV")
    s.add_argument("--coeffs", help="coefficient JSON from 'sample'")
    s.add_argument("--ell", type=_positive_ell)
    s.add_argument("--seed", type=int)
    s.add_argument("--kappa", type=float, default=FinderConfig.kappa)
    s.set_defaults(func=cmd_census)

    s = sub.add_parser("densities", parents=[common], help="critical-value densities on a grid to CSV")
    s.add_argument("--grid", type=_grid, default=(-6.0, 6.0, 241), help="lo:hi:n (default -6:6:241)")
    s.set_defaults(func=cmd_densities)

    s = sub.add_parser("predict", parents=[common], help="closed-form predictions as JSON")
    s.add_argument("--ell", type=_positive_ell, required=True)
    s.add_argument("--interval", type=_interval, default=Interval.real_line(),
                   help="lo:hi, -inf/inf accepted (default -inf:inf)")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("ensemble", parents=[common], help="run a Monte Carlo ensemble from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--threads", type=int, default=1, help="worker processes; outputs do not depend on it")
    s.set_defaults(func=cmd_ensemble)

    s = sub.add_parser("verify", parents=[common], help="statistical verdicts on ensemble records")
    s.add_argument("--records", help="records CSV from 'ensemble'")
    s.add_argument("--config", help="ensemble config JSON (restores the master seed in the summary)")
    s.add_argument("--which", choices=("summary", "reduction", "clt", "correlation", "covariance"),
                   default="summary")
    s.add_argument("--ell", type=_positive_ell)
    s.add_argument("--u", type=float, default=1.0, help="threshold for --which correlation")
    s.add_argument("--n", type=int, default=100_000, help="samples for --which covariance")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--theta", type=float, default=0.5 * math.pi)
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    return int(args.func(args))


if __name__ == "__main__":
    sys.exit(main())
