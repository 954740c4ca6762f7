"""Command-line interface.

Subcommands: gen-string, simulate, period, xcorr, sync, sweep, bench.
Every run-affecting option can also come from a flat key=value config
file (--config); explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields

import numpy as np

from . import io
from .errors import QSyncError, SyncFailed
from .period import coarse_period_fft, refine_period_lts
from .pipeline import (
    BenchRow,
    RunConfig,
    SweepCell,
    SweepGrid,
    run_bench,
    run_sweep,
    run_sync,
)
from .strings import (
    StringParams,
    generate_string,
    load_string,
    load_string_binary,
    save_string,
    save_string_binary,
)
from .xcorr import OffsetResult, OffsetSearch

_FLAG_ALIASES = {"lam": ["--lambda"], "tau_a": ["--tauA"], "t_acq": ["--Tacq"], "n1": ["--N1"]}
_INT_FIELDS = {"L", "n1", "string_seed", "seed", "n_samples"}


def _add_config_flags(parser: argparse.ArgumentParser, skip=()):
    group = parser.add_argument_group("run configuration (overrides --config)")
    for f in fields(RunConfig):
        if f.name.startswith("_") or f.name in skip:
            continue
        names = [f"--{f.name}"] + _FLAG_ALIASES.get(f.name, [])
        group.add_argument(*names, dest=f.name, default=None,
                           type=int if f.name in _INT_FIELDS else float,
                           help=argparse.SUPPRESS)
    parser.add_argument("--config", help="flat key=value config file")


def _build_config(args, **forced) -> RunConfig:
    mapping = {}
    if getattr(args, "config", None):
        mapping.update(io.parse_config(args.config))
    for f in fields(RunConfig):
        if f.name.startswith("_"):
            continue
        value = getattr(args, f.name, None)
        if value is not None:
            mapping[f.name] = value
    mapping.update(forced)
    for key in _INT_FIELDS & mapping.keys():
        mapping[key] = int(mapping[key])
    return RunConfig.from_mapping(mapping)


def _load_string_any(path):
    with open(path, "rb") as f:
        magic = f.read(6)
    return load_string_binary(path) if magic == b"QSYNB1" else load_string(path)


def _emit(lines, out_path):
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def cmd_gen_string(args) -> int:
    params = StringParams(
        L=args.L, N1=args.N1, L1=args.L // args.N1, lam=args.lam, seed=args.seed
    )
    s = generate_string(params)
    if args.binary:
        save_string_binary(s, args.out)
    else:
        save_string(s, args.out)
    print(f"wrote {args.out}: L={params.L} N1={params.N1} lambda={params.lam} "
          f"c0={s.c0_nominal:.6g}")
    return 0


def cmd_simulate(args) -> int:
    config = _build_config(args)
    from .pipeline import simulate_run

    alice, sim = simulate_run(config)
    io.save_detections(f"{args.out}.csv", sim)
    io.save_truth(f"{args.out}.truth.csv", sim)
    if args.string_out:
        save_string(alice, args.string_out)
    n_bg = int(np.count_nonzero(sim.is_background))
    print(f"wrote {args.out}.csv ({len(sim)} detections, {n_bg} background) "
          f"and {args.out}.truth.csv")
    return 0


def cmd_period(args) -> int:
    det = io.load_detections(args.infile)
    tau0 = coarse_period_fft(det.times, args.tauA, n_samples=args.n_samples)
    sel = det.times[det.times - det.times[0] < args.Tacq]
    est = refine_period_lts(
        sel, tau0, trim_fraction=args.trim, sigma=args.sigma,
        n_samples=args.n_samples, seed=args.seed,
    )
    _emit(
        [
            "tau_b,tau_guess,slope,rms_tie,inlier_fraction,ok",
            f"{est.tau_b:.17g},{est.tau_guess:.17g},{est.slope:.9g},"
            f"{est.rms_tie:.9g},{est.inlier_fraction:.6g},{int(est.ok)}",
        ],
        args.out,
    )
    return 0


def cmd_xcorr(args) -> int:
    alice = _load_string_any(args.alice)
    bob = io.load_ternary(args.bob)
    n1 = args.N1 if args.N1 is not None else alice.params.N1
    result = OffsetSearch(n1=n1, delta_threshold=args.threshold).fit(alice).search(bob)
    _emit([OffsetResult.CSV_HEADER, result.csv_row()], args.out)
    return 0


def cmd_sync(args) -> int:
    config = _build_config(args)
    detections = alice = truth = None
    if args.infile:
        if not args.alice:
            print("--in requires --alice", file=sys.stderr)
            return 2
        detections = io.load_detections(args.infile)
        alice = _load_string_any(args.alice)
        if args.truth:
            _, idx, is_bg = io.load_truth(args.truth)
            truth = (idx, is_bg)
    try:
        report = run_sync(config, detections=detections, alice=alice, truth=truth)
    except SyncFailed as exc:
        print(f"SyncFailed: {exc}", file=sys.stderr)
        return 2
    acc = "" if report.alignment_accuracy is None else f"{report.alignment_accuracy:.6f}"
    print("synchronized,m_opt,delta,alignment_accuracy,windows,failure")
    print(
        f"{int(report.synchronized)},{report.offset.m_opt},"
        f"{report.offset.distinguishability:.4g},{acc},"
        f"{len(report.period_estimates)},{report.failure or ''}"
    )
    if args.out:
        _emit([report.PERIOD_CSV_HEADER, *report.period_csv_rows()], args.out)
    return 0 if report.synchronized else 2


def _parse_list(text, cast):
    return [cast(v) for v in text.split(",") if v]


def cmd_sweep(args) -> int:
    forced = {}
    for key, value in (("duration", 0.05), ("t_acq", 0.05), ("n_samples", 4_000_000)):
        if getattr(args, key, None) is None:
            forced[key] = value
    base = _build_config(args, **forced)
    grid = SweepGrid(
        qbers=_parse_list(args.qber, float),
        bits=_parse_list(args.bits, float),
        repetitions=args.reps,
        background_rate=args.background,
    )
    cells = run_sweep(grid, base)
    _emit([SweepCell.CSV_HEADER, *(c.csv_row() for c in cells)], args.out)
    return 0


def cmd_bench(args) -> int:
    rows = run_bench(_parse_list(args.L, int), n1_policy=args.n1, seed=args.seed)
    _emit([BenchRow.CSV_HEADER, *(r.csv_row() for r in rows)], args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsync",
        description="Pulse-train clock synchronization: string generation, channel "
        "simulation, period recovery and fast time-offset search.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-string", help="generate a synchronization string file")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--N1", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true", help="write the bit-packed variant")
    p.set_defaults(func=cmd_gen_string)

    p = sub.add_parser("simulate", help="simulate a transmission, write detection CSVs")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="output prefix for .csv and .truth.csv")
    p.add_argument("--string-out", help="also write the generated string file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("period", help="recover the pulse period from a detection CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--tauA", type=float, default=20e-9)
    p.add_argument("--Tacq", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1e-10)
    p.add_argument("--trim", type=float, default=0.3)
    p.add_argument("--n-samples", dest="n_samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0, help="LTS restart seed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_period)

    p = sub.add_parser("xcorr", help="two-stage offset search: string file vs ternary CSV")
    p.add_argument("--alice", required=True, help="synchronization string file")
    p.add_argument("--bob", required=True, help="CSV of ternary symbols")
    p.add_argument("--N1", type=int, default=None, help="override the string file's N1")
    p.add_argument("--threshold", type=float, default=10.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_xcorr)

    p = sub.add_parser("sync", help="full synchronization run (simulated or from CSV)")
    _add_config_flags(p)
    p.add_argument("--in", dest="infile", help="detection CSV (else simulate from config)")
    p.add_argument("--alice", help="string file, required with --in")
    p.add_argument("--truth", help="truth sidecar CSV for alignment scoring")
    p.add_argument("--out", help="write the per-window period table here")
    p.set_defaults(func=cmd_sync)

    p = sub.add_parser("sweep", help="success-region sweep over qber and detected bits")
    _add_config_flags(p, skip=("qber", "eta", "background_rate"))
    p.add_argument("--qber", required=True, help="comma-separated qber values")
    p.add_argument("--bits", required=True, help="comma-separated detected-bit counts")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--background", type=float, default=200.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="op-count and wall-time comparison vs full FFT")
    p.add_argument("--L", required=True, help="comma-separated lengths")
    p.add_argument("--n1", default="log", help='"log" or a fixed integer')
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (QSyncError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
