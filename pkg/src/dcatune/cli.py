"""Command-line entry point.

Subcommands: ``run`` (batch experiment), ``gen-data`` (materialize the
config's synthetic datasets), ``trace`` (one run with per-iteration
records for plotting).
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from .errors import DcatuneError
from .harness import emit, generate_datasets, load_config, run_experiment, run_single_trace


def _build_parser():
    parser = argparse.ArgumentParser(prog="dcatune", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a config-driven experiment")
    run_p.add_argument("config", help="YAML experiment config")
    run_p.add_argument("--seed", type=int, default=None, help="override seed_base")
    run_p.add_argument("--reps", type=int, default=None, help="override repetitions")
    run_p.add_argument("--method", default=None, help="override method (dca|grid|random)")
    run_p.add_argument("--workers", type=int, default=None, help="override worker count")
    run_p.add_argument("--out", default=None, help="CSV output path (else config's, else stdout)")

    gen_p = sub.add_parser("gen-data", help="write the config's synthetic datasets")
    gen_p.add_argument("config")
    gen_p.add_argument("--seed", type=int, default=None)
    gen_p.add_argument("--out", default="datasets", help="output directory")

    tr_p = sub.add_parser("trace", help="emit per-iteration step/feasibility/penalty records")
    tr_p.add_argument("config")
    tr_p.add_argument("--seed", type=int, default=None)
    tr_p.add_argument("--out", default=None, help="trace CSV path (else stdout)")
    return parser


def _cmd_run(args):
    cfg = load_config(
        args.config,
        seed_base=args.seed,
        repetitions=args.reps,
        method=args.method,
        workers=args.workers,
    )
    records, agg = run_experiment(cfg)
    out = args.out or cfg.output
    if out:
        emit(records, "csv", out)
        print(f"wrote {len(records)} records to {out}")
    else:
        sys.stdout.write(emit(records, "csv"))
    sys.stdout.write(emit(records, "table"))
    n_failed = agg["n_failed"]
    if n_failed:
        print(f"warning: {n_failed} repetition(s) failed", file=sys.stderr)
        return 1
    return 0


def _cmd_gen_data(args):
    cfg = load_config(args.config)
    seed = cfg.seed_base if args.seed is None else args.seed
    paths = generate_datasets(cfg, seed, args.out)
    for p in paths:
        print(p)
    return 0


def _cmd_trace(args):
    cfg = load_config(args.config, seed_base=args.seed)
    final, trace = run_single_trace(cfg)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["k", "delta", "delta_scaled", "t", "alpha", "phi", "ll_value", "wall_time"])
    for rec in trace.records:
        writer.writerow(
            [
                rec.k,
                f"{rec.delta:.10g}",
                f"{rec.delta_scaled:.10g}",
                f"{rec.t:.10g}",
                f"{rec.alpha:.10g}",
                f"{rec.phi_next:.10g}",
                f"{rec.ll_value:.10g}",
                f"{rec.wall_time:.6g}",
            ]
        )
    text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {trace.iterations} iterations to {args.out} ({trace.reason})")
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "gen-data":
            return _cmd_gen_data(args)
        return _cmd_trace(args)
    except DcatuneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
