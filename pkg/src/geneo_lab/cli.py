"""Command-line driver: geneo-lab run <config> [--out DIR] [--seed N] ...

Exit code 0 only when every sweep point succeeds and every run-time
assertion (theoretical bound checks) holds. GENEO_LAB_THREADS caps the
worker count when --parallel is given.
"""

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config
from .experiments import run_experiment

log = logging.getLogger("geneo_lab")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="geneo-lab",
        description="Two-level Schwarz / spectral coarse space experiment driver",
    )
    parser.add_argument("--version", action="version", version=f"geneo-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config", help="experiment config file (key=value sections)")
    run.add_argument("--out", default=None, help="output directory (default: <config stem>_out)")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument(
        "--parallel", action="store_true", help="evaluate sweep points concurrently"
    )
    run.add_argument(
        "--no-plots", action="store_true", help="skip rendering PNG figures"
    )
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        log.error("bad config: %s", exc)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    out_dir = Path(args.out) if args.out else Path(f"{Path(args.config).stem}_out")
    log.info("experiment %r (%s) -> %s", cfg.name, cfg.kind, out_dir)
    summary = run_experiment(cfg, out_dir, parallel=args.parallel, make_plots=not args.no_plots)
    for table in summary.tables:
        print(f"table   {table}")
    for fig in summary.figures:
        print(f"figure  {fig}")
    for dump in summary.dumps:
        print(f"dump    {dump}")
    if summary.runs_log:
        print(f"log     {summary.runs_log}")
    for failure in summary.failures:
        print(f"FAILED  {failure}")
    for violation in summary.bound_violations:
        print(f"BOUND   {violation}")
    if summary.ok:
        print("all sweep points succeeded; all run-time assertions passed")
        return 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
