# File: main.py
import argparse
import logging
import sys
from typing import List, Optional

from .. import __version__
from ..routers.commands import add_subcommands
from .dependencies import get_settings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmh",
        description="Lifted Metropolis-Hastings experiments on discrete factor graphs",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
    # Whole pipeline from a shipped config
    uv run lmh run --config data/experiments/ising16.json --seeds "1,2,3" --out runs/ising16

    # Step by step
    uv run lmh generate --config data/experiments/osa_bias.json --out runs/bias
    uv run lmh symmetrize --config data/experiments/osa_bias.json --model runs/bias/model.json --out runs/bias
    uv run lmh sample --model runs/bias/model.json --groups runs/bias/groups.json --method lmh --iterations 100000 --out runs/bias
    uv run lmh evaluate --model runs/bias/model.json --estimate runs/bias/marginals/lmh_chain0.csv
        """,
    )
    parser.add_argument("--log-level", help="Overrides LMH_LOG_LEVEL")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    add_subcommands(parser)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    level = (args.log_level or get_settings().log_level).upper()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        return args.handler(args)
    except (ValueError, OSError) as e:
        # LMHError and pydantic ValidationError are ValueErrors
        logging.getLogger(__name__).debug("Command failed", exc_info=True)
        print(f"❌ Error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
