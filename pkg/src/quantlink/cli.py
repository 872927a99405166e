"""Command-line entry point: ``quantlink run <config> --out <csv>``."""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, default_config_text, load_config
from .errors import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quantlink", description="Quantized hybrid-receiver link experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment config and write CSV")
    run.add_argument("config", nargs="?", help="INI experiment config")
    run.add_argument("--out", help="output CSV path")
    run.add_argument("--seed", type=int, help="override experiment.seed")
    run.add_argument("--trials", type=int, help="override experiment.trials")
    run.add_argument("--print-defaults", nargs="?", const="se_ee", choices=EXPERIMENTS, metavar="EXPERIMENT",
                     help="print a config with every default and exit")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(default_config_text(args.print_defaults))
        return EXIT_OK
    if not args.config or not args.out:
        print("quantlink: error: config and --out are required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = load_config(args.config)
        if args.trials is not None:
            if args.trials < 1:
                raise ConfigError("must be >= 1", "--trials")
            config = config.replace(trials=args.trials)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("must be in [0, 2**64)", "--seed")
            config = config.replace(seed=args.seed)
    except ConfigError as exc:
        print(f"quantlink: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    # imported late so --print-defaults and config errors stay fast
    from .experiments import run_experiment, write_csv

    try:
        table = run_experiment(config)
        write_csv(table, args.out)
    except Exception as exc:  # noqa: BLE001 - any failure past validation is a runtime error
        print(f"quantlink: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for skip in table.skipped:
        print("quantlink: skipped " + ", ".join(f"{k}={v}" for k, v in skip.items()), file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
