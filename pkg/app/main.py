# app/main.py
import argparse
import logging
import sys

from app import config as settings
from app.config import RunContext, load_run_config
from app.errors import AcceptanceFailure, WaveguideError
from app.routes import frame, mode, selftest, spectrum, sweep

logger = logging.getLogger("main")

ROUTES = (frame, mode, spectrum, sweep, selftest)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="flat key = value run configuration")
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides output.directory)")
    parser.add_argument("--threads", type=int, metavar="N", help="worker threads for sweeps")
    parser.add_argument("--format", choices=["csv"], default="csv", help="output format")
    parser.add_argument("--verbose", action="store_true", help="debug logging")


# ------------------ Parser ------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="waveguide",
        description="Effective operators of thin quantum waveguides and their validation against the full Laplacian.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for route in ROUTES:
        _add_common(route.add_parser(subparsers))
    logger.debug(f"Subcommands registered: {[r.__name__.rsplit('.', 1)[-1] for r in ROUTES]}")
    return parser


# ------------------ Logging Configuration ------------------
def configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, settings.LOG_LEVEL, logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


# ------------------ Entry Point ------------------
def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    logger.info(f"🚀 waveguide {args.command} starting...")
    try:
        config = load_run_config(args.config)
        ctx = RunContext.create(config, args.out, args.threads)
        code = args.handler(ctx)
    except AcceptanceFailure as e:
        logger.warning(f"⚠️ {e.detail}")
        print(f"FAIL: {e.detail}", file=sys.stderr)
        return e.exit_code
    except WaveguideError as e:
        logger.error(f"❌ {type(e).__name__}: {e.detail}")
        print(f"error: {e.detail}", file=sys.stderr)
        return e.exit_code
    logger.info(f"✅ waveguide {args.command} finished (exit {code})")
    return code


if __name__ == "__main__":
    sys.exit(main())
