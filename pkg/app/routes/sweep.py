# app/routes/sweep.py
import logging

import numpy as np

from app.config import RunContext
from app.errors import SweepRejected
from app.models import ProblemKind
from app.services.compare import summary_lines
from app.services.pipeline import judge_sweep, problem_kind, reject_dominated, run_sweep, solve_mode
from app.storage import write_csv, write_text

logger = logging.getLogger("routes.sweep")


def add_parser(subparsers):
    parser = subparsers.add_parser("sweep", help="eps sweep with convergence-order fit")
    parser.set_defaults(handler=cmd_sweep)
    return parser


def cmd_sweep(ctx: RunContext) -> int:
    config = ctx.config
    mode = None if problem_kind(config) == ProblemKind.hollow_surface else solve_mode(config)[0]
    outcome = run_sweep(config, mode, ctx.threads, ctx.max_unknowns, ctx.config_hash)
    report = outcome.report
    try:
        reject_dominated(outcome, config.sweep.disc_fraction)
    except SweepRejected as e:
        # only the reason is kept for a rejected sweep
        write_text(ctx.path("sweep_rejected").with_suffix(".txt"), [f"# rejected: {e}"], ctx.config_hash)
        raise

    n_eps, n_levels, n_eigs = outcome.mu.shape
    eps, level, index = np.meshgrid(outcome.eps, outcome.levels, np.arange(n_eigs), indexing="ij")
    grids = np.asarray(outcome.grids)
    write_csv(
        ctx.path("sweep_levels"),
        {
            "eps": eps.ravel(),
            "level": level.ravel(),
            "Nx": grids[level.ravel(), 0],
            "Nn": grids[level.ravel(), 1],
            "index": index.ravel(),
            "mu": outcome.mu.ravel(),
            "nu": outcome.nu.ravel(),
        },
        ctx.config_hash,
    )
    n_index = report.paired_errors.shape[1]
    eps, index = np.meshgrid(report.eps_values, np.arange(n_index), indexing="ij")
    write_csv(
        ctx.path("sweep_report"),
        {
            "eps": eps.ravel(),
            "index": index.ravel(),
            "mu": report.grid_limits[0].ravel(),
            "nu": report.grid_limits[1].ravel(),
            "error": report.paired_errors.ravel(),
            "disc_error": outcome.disc_errors.ravel(),
            "excluded": report.excluded.ravel(),
        },
        ctx.config_hash,
        {"theory_order": report.theory_order, "threshold": report.threshold, "monotone": report.monotone},
    )
    lines = summary_lines(report) + [f"# warning: {w}" for w in report.warnings]
    write_text(ctx.path("sweep_summary").with_suffix(".txt"), lines, ctx.config_hash)
    for line in summary_lines(report):
        print(line)
    judge_sweep(outcome)
    return 0
