# app/routes/selftest.py
import logging

from app.config import RunContext
from app.errors import AcceptanceFailure
from app.services.pipeline import run_selftest
from app.storage import write_csv

logger = logging.getLogger("routes.selftest")


def add_parser(subparsers):
    parser = subparsers.add_parser("selftest", help="synthetic order check and analytic oracles")
    parser.set_defaults(handler=cmd_selftest)
    return parser


def cmd_selftest(ctx: RunContext) -> int:
    results = run_selftest(ctx.threads)
    write_csv(
        ctx.path("selftest"),
        {
            "check": [r.name for r in results],
            "value": [r.value for r in results],
            "expected": [r.expected for r in results],
            "rel_error": [r.rel_error for r in results],
            "tolerance": [r.tolerance for r in results],
            "passed": [r.passed for r in results],
        },
        ctx.config_hash,
    )
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {r.rel_error:.2e}  {'PASS' if r.passed else 'FAIL'}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise AcceptanceFailure(f"self-test failed: {', '.join(failed)}")
    logger.info("✅ Self-test passed")
    return 0
