"""Command line entry point: ``ecmem run``, ``ecmem table``, ``ecmem stream-study``."""

from __future__ import annotations

import argparse
import logging
import sys

from ecmem import analysis, harness
from ecmem.memory import STRATEGIES

log = logging.getLogger("ecmem")

EXIT_CONFIG = 2


def _run(args) -> int:
    overrides = {
        "env": args.env,
        "strategy": args.strategy,
        "memory_size": args.memory_size,
        "seeds": args.seeds,
        "total_steps": args.steps,
    }
    try:
        if args.config:
            config = harness.load_config(args.config, overrides)
        else:
            config = harness.make_config(overrides)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("running %s", config)
    records = harness.run_experiment(config, threads=args.threads)
    if args.out:
        harness.write_csv(records, args.out)
    else:
        print(",".join(harness.CSV_HEADER))
        for r in records:
            print(f"{r.seed},{r.env},{r.strategy},{r.memory_size},{r.step},{float(r.mean_eval_reward)!r}")
    print(harness.format_table(harness.aggregate_final(records, min(10, len(records) // len(config.seeds)))), file=sys.stderr)
    return 0


def _table(args) -> int:
    records = harness.read_csv(args.input)
    try:
        rows = harness.aggregate_final(records, args.last)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(harness.format_table(rows))
    return 0


def _stream_study(args) -> int:
    if args.memory_size < 2:
        print("config error: memory_size: must be >= 2", file=sys.stderr)
        return EXIT_CONFIG
    snaps = analysis.run_stream_study(args.out_dir, args.memory_size, args.seed)
    fracs = analysis.final_phase2_fractions(snaps, analysis.StreamSpec(seed=args.seed))
    for method, frac in fracs.items():
        print(f"{method:<7} final centroids in phase-2 box: {frac:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecmem", description="Bounded episodic-control memory experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train MFEC agents and write evaluation records")
    run.add_argument("--config", help="INI file with [experiment] and [agent] sections")
    run.add_argument("--env")
    run.add_argument("--strategy", choices=STRATEGIES)
    run.add_argument("--memory-size", type=int)
    run.add_argument("--seeds", help="seed count, or a comma separated list")
    run.add_argument("--steps", type=int)
    run.add_argument("--out", help="CSV path (default: stdout)")
    run.add_argument("--threads", type=int, help="worker processes (default: $ECMEM_THREADS or CPU count)")
    run.set_defaults(func=_run)

    table = sub.add_parser("table", help="aggregate a records CSV into mean +- std per setting")
    table.add_argument("--in", dest="input", required=True)
    table.add_argument("--last", type=int, default=10)
    table.set_defaults(func=_table)

    ss = sub.add_parser("stream-study", help="drifting 2D stream: snapshots and density grids")
    ss.add_argument("--memory-size", type=int, default=100)
    ss.add_argument("--seed", type=int, default=0)
    ss.add_argument("--out-dir", required=True)
    ss.set_defaults(func=_stream_study)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
