"""
Command-line entry point for the singular flux lab.

    sfl <kind> --config <file> [--out <dir>] [--grid-n <N>] [--quiet]
"""

import argparse
import logging
import sys
from typing import Optional, Sequence

from . import config
from .scenarios import KINDS, run_scenario

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sfl", description="Singular flux lab: run one scenario and write its artifacts.")
    p.add_argument("kind", choices=KINDS, help="Scenario kind; must match the kind in the config file")
    p.add_argument("--config", required=True, help="Scenario TOML file")
    p.add_argument("--out", default=None, help=f"Output directory (default {config.DEFAULT_OUT_DIR}; SFL_OUT overrides)")
    p.add_argument("--grid-n", type=int, default=None, help="Override grid.N")
    p.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.quiet else getattr(logging, config.SFL_LOG_LEVEL, logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)
    exit_code = run_scenario(args.config, out=args.out, grid_n=args.grid_n, kind=args.kind)
    logger.debug(f"sfl {args.kind} exiting with {exit_code}")
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
