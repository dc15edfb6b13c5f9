"""Command-line entry point: ``meshtune <subcommand> [--config FILE] [flags]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 leakage refusal.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import MeshTuneError
from .harness import (TUNERS, ExperimentConfig, cmd_build_metadataset, cmd_compare, cmd_diagnostics,
                      cmd_generate_curves, cmd_train_meta)

COMMANDS = {
    "generate-curves": cmd_generate_curves,
    "build-metadataset": cmd_build_metadataset,
    "train-meta": cmd_train_meta,
    "compare": cmd_compare,
    "diagnostics": cmd_diagnostics,
}


def _add_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config; flags override its values")
    p.add_argument("--n", type=int, help="configurations sampled per SH/MeSH bracket (default 64)")
    p.add_argument("--eta", type=float, help="elimination factor (default 2)")
    p.add_argument("--r-min", dest="r_min", type=int, help="smallest resource (default 16)")
    p.add_argument("--r-max", dest="r_max", type=int, help="largest resource (default 1024)")
    p.add_argument("--space", help="search-space JSON (default: built-in GBDT space)")
    p.add_argument("--datasets", nargs="+", help="CSV datasets or loss-curve tables, by subcommand")
    p.add_argument("--tuners", nargs="+", choices=TUNERS)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--regressor", choices=["knn", "gbdt", "mlp"])
    p.add_argument("--patience", type=int, help="early-stopping patience for random search (default 50)")
    p.add_argument("--folds", type=int)
    p.add_argument("--landmarks", choices=["previous", "inclusive"])
    p.add_argument("--bundle")
    p.add_argument("--metadataset")
    p.add_argument("--exclude", nargs="+", help="dataset ids held out of meta-model training")
    p.add_argument("--source", choices=["gbdt", "surrogate"])
    p.add_argument("--n-configs", dest="n_configs", type=int)
    p.add_argument("--trial-budget", dest="trial_budget", type=int)
    p.add_argument("--time-budget", dest="time_budget", type=float, help="seconds per dataset")
    p.add_argument("--synthetic-count", dest="synthetic_count", type=int)
    p.add_argument("--synthetic-seed", dest="synthetic_seed", type=int)
    p.add_argument("--severity", type=float)
    p.add_argument("--out", help="output file or directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meshtune", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        _add_flags(sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0] if fn.__doc__ else None))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = ExperimentConfig.from_sources(args.config, overrides)
        COMMANDS[args.command](cfg)
    except MeshTuneError as exc:
        print(f"meshtune {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
