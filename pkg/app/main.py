"""
Command-line entry point
qsdc session|capacity|estimate|codec --config FILE [--seed U64] [--out DIR]
     [--jobs N] [--sweep KEY=START:STOP:STEP]

Exit codes: 0 ok, 2 config error, 3 input-data error, 4 internal error.
"""

import argparse
import json
import sys
from typing import List, Optional

from app.api.commands import COMMANDS
from app.config import get_settings, load_experiment
from app.errors import QsdcError
from app.utils.logging_setup import configure_logging, get_logger

logger = get_logger(__name__)

DESCRIPTIONS = {
    "session": "Run a protocol session (or a BER sweep with --sweep)",
    "capacity": "Secrecy capacity against distance, multiplexed and single mode",
    "estimate": "Per-mode channel estimation from CSV or synthetic data",
    "codec": "Mask codec round-trip property report",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsdc", description="Mask-coded CV-QSDC simulator")
    parser.add_argument("--log-level", default=None, help="Logging level (default: QSDC_LOG_LEVEL or INFO)")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, text in DESCRIPTIONS.items():
        sub = subparsers.add_parser(name, help=text, description=text)
        sub.add_argument("--config", help="INI experiment manifest")
        sub.add_argument("--seed", type=int, help="64-bit seed (overrides QSDC_SEED and the manifest)")
        sub.add_argument("--out", help="Output directory (default: QSDC_OUTPUT_DIR or results)")
        sub.add_argument("--jobs", type=int, help="Worker processes for sweeps (default: QSDC_JOBS or 1)")
        sub.add_argument("--sweep", help="section.key=START:STOP:STEP")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging(args.log_level or get_settings().log_level)
        spec = load_experiment(
            args.command,
            config_path=args.config,
            seed=args.seed,
            output_dir=args.out,
            jobs=args.jobs,
            sweep=args.sweep,
        )
        result = COMMANDS[args.command](spec)
    except QsdcError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except Exception:
        logger.exception("Unexpected failure")
        return 4
    logger.info(json.dumps(result, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
