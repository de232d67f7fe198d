# app/routes/mode.py
import logging

from app.config import RunContext
from app.services.pipeline import solve_mode
from app.storage import write_csv

logger = logging.getLogger("routes.mode")


def add_parser(subparsers):
    parser = subparsers.add_parser("mode", help="fibre ground state on the cross-section grid")
    parser.set_defaults(handler=cmd_mode)
    return parser


def cmd_mode(ctx: RunContext) -> int:
    mode, extrapolated = solve_mode(ctx.config)
    coords = mode.coordinates()
    columns = {f"n{k + 1}": c[mode.mask] for k, c in enumerate(coords)}
    columns["phi0"] = mode.phi0[mode.mask]
    metadata = {
        "shape": mode.shape.kind.value,
        "lambda0": mode.lambda0,
        "residual": mode.residual,
        "L_norm_sq": mode.L_norm_sq,
        "center_of_mass": mode.com,
        "spacing": mode.spacing,
    }
    if extrapolated is not None:
        metadata["lambda0_extrapolated"] = extrapolated
    write_csv(ctx.path("mode"), columns, ctx.config_hash, metadata)
    return 0
