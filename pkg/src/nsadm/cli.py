"""Command-line interface.

Subcommands: generate, train, infer, evaluate, validate-stats, sweep.
Exit codes: 0 success, 2 validation failure, 3 config error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .config import load_config
from .errors import ConfigError, GenerationError, ValidationFailure


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage problems as config errors."""

    def error(self, message):
        raise ConfigError(message)


def _power_list(text: str):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as e:
        raise ConfigError(f"bad --power-dbm list {text!r}: {e}") from e


def _add_common(sub):
    sub.add_argument("--config", metavar="PATH", default=None,
                     help="experiment config JSON (defaults apply when omitted)")
    sub.add_argument("--seed", metavar="U64", type=int, default=None,
                     help="override the global seed")
    sub.add_argument("--jobs", metavar="N", type=int, default=1,
                     help="worker cap for scene-level parallelism "
                          "(never changes outputs)")
    sub.add_argument("--out", metavar="DIR", default=None,
                     help="override the output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="nsadm",
                     description="Distance-matrix degradation simulator and "
                                 "diffusion-based recovery toolkit")
    commands = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
            ("generate", "build the synthetic dataset"),
            ("train", "train the denoiser on the training split"),
            ("infer", "run a recovery method over the test split"),
            ("evaluate", "score predictions and write trend verdicts"),
            ("validate-stats", "Monte Carlo check of estimator statistics"),
            ("sweep", "detection-ratio and variance-scale sweeps")):
        sub = commands.add_parser(name, help=help_text)
        _add_common(sub)
        if name == "infer":
            sub.add_argument("--method", choices=pipeline.METHODS, default="nsadm",
                             help="recovery method (default nsadm)")
            sub.add_argument("--power-dbm", metavar="LIST", type=_power_list,
                             default=None,
                             help="comma-separated transmit powers, e.g. "
                                  "--power-dbm=-20,-10 (default: all configured)")
        if name == "validate-stats":
            sub.add_argument("--trials", metavar="N", type=int, default=10_000,
                             help="Monte Carlo trials per operating point")
    return parser


def _resolve_config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg.run.seed = args.seed
    if args.out is not None:
        cfg.run.out_dir = args.out
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _resolve_config(args)
        if args.command == "generate":
            path = pipeline.cmd_generate(cfg, jobs=args.jobs)
            print(f"dataset: {path}")
        elif args.command == "train":
            def progress(step, total, loss):
                print(f"step {step}/{total} loss {loss:.6f}", flush=True)
            prefix = pipeline.cmd_train(cfg, progress=progress)
            print(f"checkpoint: {prefix}")
        elif args.command == "infer":
            path = pipeline.cmd_infer(cfg, args.method, powers=args.power_dbm,
                                      jobs=args.jobs)
            print(f"predictions: {path}")
        elif args.command == "evaluate":
            csv_path, summary_path = pipeline.cmd_evaluate(cfg)
            print(f"metrics: {csv_path}")
            print(f"summary: {summary_path}")
        elif args.command == "validate-stats":
            path = pipeline.cmd_validate_stats(cfg, trials=args.trials)
            print(f"report: {path}")
        elif args.command == "sweep":
            path = pipeline.cmd_sweep(cfg, jobs=args.jobs)
            print(f"sweep: {path}")
        return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 3
    except (ValidationFailure, GenerationError) as e:
        print(f"validation failure: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
