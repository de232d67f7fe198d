# app/routes/frame.py
import logging

import numpy as np

from app.config import RunContext
from app.services.geometry import twisted_frame
from app.services.pipeline import build_frame, build_twist
from app.storage import write_csv

logger = logging.getLogger("routes.frame")


def add_parser(subparsers):
    parser = subparsers.add_parser("frame", help="relatively parallel frame and curvature columns")
    parser.set_defaults(handler=cmd_frame)
    return parser


def frame_columns(ctx: RunContext) -> dict[str, np.ndarray]:
    frame = build_frame(ctx.config)
    columns = {"x": frame.nodes}
    for name, vectors in (("tau", frame.tau), ("e1", frame.e1), ("e2", frame.e2)):
        for k in range(3):
            columns[f"{name}_{k + 1}"] = vectors[:, k]
    columns["kappa1"], columns["kappa2"] = frame.kappa[:, 0], frame.kappa[:, 1]
    twist = build_twist(ctx.config, frame.nodes)
    if twist is not None:
        f1, f2 = twisted_frame(frame, twist)
        columns["omega"], columns["omega_prime"] = twist.omega, twist.omega_prime
        for name, vectors in (("f1", f1), ("f2", f2)):
            for k in range(3):
                columns[f"{name}_{k + 1}"] = vectors[:, k]
    return columns


def cmd_frame(ctx: RunContext) -> int:
    columns = frame_columns(ctx)
    kappa = np.hypot(columns["kappa1"], columns["kappa2"])
    logger.info(f"✅ Frame ready: |kappa| in [{kappa.min():.6g}, {kappa.max():.6g}]")
    write_csv(ctx.path("frame"), columns, ctx.config_hash, {"curve": ctx.config.curve.kind.value})
    return 0
