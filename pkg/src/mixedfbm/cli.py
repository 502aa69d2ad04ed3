"""Command-line front end for the mixed-fBm experiment laboratory.

Subcommands map one-to-one onto the experiment drivers; every run reads an
optional flat key=value config file, applies --key value overrides, executes
the seeded Monte Carlo and writes results.csv / summary.txt / manifest.txt
(plus rate-fit PNGs) into the output directory.

Exit codes: 0 success, 1 experiment failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import KEYMAP, ConfigError, ExperimentConfig, load_config, apply_overrides
from .experiments import EXPERIMENTS, run_experiment
from .report import write_outputs

_RESERVED = {"config", "seed", "out", "replicates", "workers", "help"}
_CONFIG_KEYS = set(KEYMAP) | {f.name for f in ExperimentConfig.__dataclass_fields__.values()}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mixedfbm",
        description="Simulation, likelihood and wavelet experiments for the "
                    "mixed fractional Brownian motion model.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True,
                                metavar="{" + ",".join(sorted(EXPERIMENTS)) + "}")
    for name in sorted(EXPERIMENTS):
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", metavar="PATH", default=None,
                       help="flat key=value configuration file")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--out", metavar="DIR", default=None, help="output directory")
        p.add_argument("--replicates", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
    return parser


def _split_overrides(argv):
    """Separate trailing --key value pairs (dotted config keys) from argv."""
    known, overrides = [], []
    i = 0
    while i < len(argv):
        arg = argv[i]
        key = arg[2:].split("=", 1)[0] if arg.startswith("--") else None
        if key and key not in _RESERVED and key in _CONFIG_KEYS:
            if "=" in arg:
                overrides.append(tuple(arg[2:].split("=", 1)))
                i += 1
            elif i + 1 < len(argv):
                overrides.append((key, argv[i + 1]))
                i += 2
            else:
                raise ConfigError(f"override {arg} is missing a value")
        elif key and key not in _RESERVED:
            raise ConfigError(f"unknown option or config key --{key}")
        else:
            known.append(arg)
            i += 1
    return known, overrides


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        known, overrides = _split_overrides(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    parser = _build_parser()
    args = parser.parse_args(known)

    try:
        cfg = load_config(args.config)
        cfg = replace(cfg, experiment=args.experiment)
        if args.seed is not None:
            cfg = replace(cfg, master_seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, out_dir=args.out)
        if args.replicates is not None:
            cfg = replace(cfg, replicates=args.replicates)
        if args.workers is not None:
            cfg = replace(cfg, workers=args.workers)
        cfg = apply_overrides(cfg, overrides)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        result = run_experiment(cfg)
        files = write_outputs(cfg, result)
    except Exception as exc:  # experiment failure
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1

    print(result.summary)
    for name, path in files.items():
        print(f"wrote {name}: {path}")
    if result.passed is False:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
