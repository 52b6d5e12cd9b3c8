import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from artcombine import __version__
from artcombine.commands import combine, ldmatrix, simulate
from artcombine.config import settings
from artcombine.exceptions import ArtCombineError

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.log_level.upper(), logging.INFO),
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    stream=sys.stderr,
)
logger = logging.getLogger(__name__)

COMMANDS = (combine, simulate, ldmatrix)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artcombine",
        description="Combined p-values for the smallest k of L association tests",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="Override ARTCOMBINE_LOG_LEVEL")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads for batch sampling")

    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, dispatch to the sub-command and map failures to exit codes"""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.log_level:
        logging.getLogger().setLevel(args.log_level.upper())
    if args.threads is not None:
        if args.threads < 1:
            parser.error("--threads must be at least 1")
        settings.threads = args.threads

    try:
        return args.handler(args)
    except ArtCombineError as e:
        return _fail(e.detail, e.exit_code)
    except ValidationError as e:
        # Domain models built straight from flags
        error = e.errors()[0]
        detail = str(error.get("msg", e)).replace("Value error, ", "")
        return _fail(f"invalid arguments: {detail}", 2)
    except KeyboardInterrupt:
        return _fail("interrupted", 130)
    except Exception as e:
        # Global exception handler
        logger.exception(f"Unhandled exception: {str(e)}")
        return _fail(f"unexpected error: {e}", 1)


def _fail(detail: str, code: int) -> int:
    logger.error(detail)
    print(f"artcombine: error: {detail}", file=sys.stderr)
    return code


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
