"""Command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config")
    common.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    common.add_argument("--out", type=Path, help="output directory for reports, CSVs and keys")
    common.add_argument("--trials", type=int, help="override trial / round counts")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dmcvqkd", description="QPSK CV-QKD simulation and post-processing")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("protocol", parents=[common], help="simulate one protocol run end to end")
    sub.add_parser("ir-bench", parents=[common], help="frame-error-rate sweep, CSV output")
    sub.add_parser("dsp-loopback", parents=[common], help="synthetic DSP chain loopback")
    sub.add_parser("keyrate", parents=[common], help="key length from entropy sidecars")
    sub.add_parser("characterize", parents=[common], help="honest run -> acceptance set")
    return p


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.trials is not None:
        if args.command in ("protocol", "characterize"):
            updates["n_rounds"] = args.trials
        elif args.command == "dsp-loopback":
            updates["dsp.n_symbols"] = args.trials
        elif args.command == "ir-bench":
            updates["ir_bench.trials"] = args.trials
    if updates:
        try:
            cfg = cfg.with_updates(**updates)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    # imported late so config errors surface before numba compiles anything
    from . import pipeline
    from .polar.bench import CSV_COLUMNS

    if args.command == "protocol":
        report = pipeline.run_protocol(cfg, args.out)
        print(report.to_json())
        return EXIT_ABORT if report.aborted else EXIT_OK
    if args.command == "characterize":
        _, report = pipeline.characterize(cfg, args.out)
        print(report.to_json())
        return EXIT_OK
    if args.command == "ir-bench":
        rows = pipeline.run_ir_bench(cfg, args.out)
        print(",".join(CSV_COLUMNS))
        for r in rows:
            print(",".join(str(v) for v in r.row().values()))
        return EXIT_OK
    if args.command == "dsp-loopback":
        print(pipeline.run_dsp_loopback(cfg, args.out).to_json())
        return EXIT_OK
    if args.command == "keyrate":
        try:
            report = pipeline.keyrate(cfg, args.out)
        except (OSError, ValueError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(report.to_json())
        return EXIT_OK
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
