"""Command line front end: ``singflow <experiment> --config <path> [--seed N] [--out DIR]``.

Exit codes: 0 pass, 1 threshold failure, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import EXPERIMENTS, load_config
from .exceptions import ConfigError, SingflowError
from .experiments import run_experiment

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def build_parser():
    p = argparse.ArgumentParser(prog="singflow",
                                description="Run a singular-flow experiment from a JSON config.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="path to the JSON config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="output directory (overrides OUTPUT_DIR)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        update = {"experiment": args.experiment}
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed: must lie in [0, 2**64)")
            update["seed"] = args.seed
        cfg = cfg.model_copy(update=update)
        out = args.out or os.environ.get("OUTPUT_DIR") or cfg.output_dir
        report = run_experiment(cfg, out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingflowError, ArithmeticError) as err:
        print(f"runtime error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{cfg.experiment}: {report['status']}")
    for c in report["checks"]:
        print(f"  [{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: {c['value']!r} "
              f"{c['op']} {c['threshold']!r}")
    return EXIT_PASS if report["status"] == "pass" else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
