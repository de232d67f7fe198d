# app/routes/spectrum.py
import logging

import numpy as np

from app.config import RunContext
from app.models import ProblemKind
from app.services.pipeline import problem_kind, run_spectrum, solve_mode
from app.storage import write_csv

logger = logging.getLogger("routes.spectrum")


def add_parser(subparsers):
    parser = subparsers.add_parser("spectrum", help="adiabatic and full spectra at one eps")
    parser.set_defaults(handler=cmd_spectrum)
    return parser


def cmd_spectrum(ctx: RunContext) -> int:
    config = ctx.config
    mode = None
    if problem_kind(config) != ProblemKind.hollow_surface and config.spectrum.m == 0:
        mode, _ = solve_mode(config)
    result = run_spectrum(config, mode, ctx.max_unknowns)
    meta = {"eps": result.eps, "kind": problem_kind(config).value}

    if result.operator is not None:
        write_csv(ctx.path("potentials"), result.operator.bundle.columns(), ctx.config_hash, meta)
    if result.adiabatic is not None:
        spec = result.adiabatic
        write_csv(
            ctx.path("adiabatic_spectrum"),
            {"index": np.arange(len(spec.eigenvalues)), "eigenvalue": spec.eigenvalues, "residual": spec.residuals},
            ctx.config_hash,
            meta,
        )
    if result.full is not None:
        full = result.full
        n = len(full.eigenvalues)
        write_csv(
            ctx.path("full_spectrum"),
            {
                "kind": [full.kind.value] * n,
                "eps": np.full(n, full.eps),
                "m": np.full(n, full.m, dtype=int),
                "index": np.arange(n),
                "eigenvalue": full.eigenvalues,
                "residual": full.residuals,
                "Nx": np.full(n, full.nx, dtype=int),
                "Nn": np.full(n, full.nn, dtype=int),
            },
            ctx.config_hash,
        )
    if result.adiabatic is not None and result.full is not None:
        k = min(len(result.adiabatic.eigenvalues), len(result.full.eigenvalues))
        gaps = np.abs(result.adiabatic.eigenvalues[:k] - result.full.eigenvalues[:k])
        logger.info(f"✅ |mu - nu| = {np.array2string(gaps, precision=3)}")
    return 0
