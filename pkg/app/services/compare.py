# app/services/compare.py
"""Richardson extrapolation, adiabatic/full pairing and convergence-order fits."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from app.errors import DimensionError, SweepRejected
from app.models import FullSpectrum, Spectrum, SweepReport

logger = logging.getLogger("compare")

NUMERICAL_FLOOR = 1e-10
ROBUSTNESS_SPREAD = 0.3
DEFAULT_EPS = (0.2, 0.141, 0.1, 0.071, 0.05)


@dataclass(frozen=True)
class RichardsonEstimate:
    value: float
    monotone: bool
    ratio: float = np.nan
    error: float = np.nan


def richardson(
    values, order: float, refinement: float = 2.0, next_order: float | None = None
) -> RichardsonEstimate:
    """Continuum limit from values on grids refined by ``refinement``.

    The two finest values give (r^p v_fine − v_coarse)/(r^p − 1). With three or
    more values the ratio of successive differences is reported, and the error
    of the limit is estimated from the coarser-pair limit assuming the next
    term is O(h^next_order) (default p + 2). Non-monotone sequences are flagged.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or len(v) < 2:
        raise DimensionError("Richardson extrapolation needs at least two refinements")
    factor = refinement ** order
    value = float((factor * v[-1] - v[-2]) / (factor - 1.0))
    diffs = np.diff(v)
    scale = NUMERICAL_FLOOR * max(1.0, float(np.max(np.abs(v))))
    significant = np.abs(diffs) > scale
    monotone = bool(np.all(np.sign(diffs[significant]) == np.sign(diffs[significant][0]))) if significant.any() else True
    ratio, error = np.nan, np.nan
    if len(v) >= 3:
        if abs(diffs[-1]) > scale:
            ratio = float(abs(diffs[-2] / diffs[-1]))
        coarser = (factor * v[-2] - v[-3]) / (factor - 1.0)
        q = order + 2.0 if next_order is None else next_order
        error = float(abs(value - coarser) / (refinement ** q - 1.0))
    if not monotone:
        logger.warning(f"⚠️ Non-monotone refinement sequence {v.tolist()}")
    return RichardsonEstimate(value, monotone, ratio, error)


def richardson_columns(table: np.ndarray, order: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column-wise Richardson over the first axis (refinement levels).

    Returns (limits, discretization error estimate, monotone flags). With three
    levels the error is the three-level estimate of ``richardson``, otherwise
    the distance from the finest raw value.
    """
    table = np.asarray(table, dtype=float)
    limits = np.empty(table.shape[1:])
    errors = np.empty(table.shape[1:])
    monotone = np.empty(table.shape[1:], dtype=bool)
    for j in np.ndindex(*table.shape[1:]):
        column = table[(slice(None),) + j]
        est = richardson(column, order)
        limits[j], monotone[j] = est.value, est.monotone
        errors[j] = est.error if len(column) >= 3 else abs(est.value - column[-1])
    return limits, errors, monotone


# ------------------ Order fits ------------------
def fit_order(eps, errors) -> tuple[float, float, np.ndarray]:
    """Least-squares slope of log|error| against log ε.

    Returns (slope, rms residual, mask of points used); points under the
    numerical floor are excluded.
    """
    eps = np.asarray(eps, dtype=float)
    errors = np.abs(np.asarray(errors, dtype=float))
    used = errors > NUMERICAL_FLOOR
    if used.sum() < 2:
        return np.nan, np.nan, used
    fit = stats.linregress(np.log(eps[used]), np.log(errors[used]))
    predicted = fit.intercept + fit.slope * np.log(eps[used])
    residual = float(np.sqrt(np.mean((np.log(errors[used]) - predicted) ** 2)))
    return float(fit.slope), residual, used


def leave_one_out(eps, errors) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    slopes = []
    for i in range(len(eps)):
        keep = np.arange(len(eps)) != i
        slopes.append(fit_order(eps[keep], errors[keep])[0])
    return np.asarray(slopes)


def pair_and_fit(
    adiabatic: list[Spectrum],
    full: list[FullSpectrum],
    eps_values,
    theory_order: float = 3.0,
    threshold: float = 2.5,
    config_hash: str = "",
) -> SweepReport:
    """Pair eigenvalues by sorted index per ε and fit |μ_j − ν_j| ~ ε^p."""
    eps = np.asarray(eps_values, dtype=float)
    if not (len(adiabatic) == len(full) == len(eps)):
        raise DimensionError("one adiabatic and one full spectrum per eps value is required")
    order = np.argsort(-eps, kind="stable")
    eps = eps[order]
    if np.any(np.diff(eps) >= 0):
        raise DimensionError("eps values must be distinct")
    n_index = min(min(len(adiabatic[i].eigenvalues), len(full[i].eigenvalues)) for i in order)
    mu = np.array([np.sort(adiabatic[i].eigenvalues)[:n_index] for i in order])
    nu = np.array([np.sort(full[i].eigenvalues)[:n_index] for i in order])
    errors = np.abs(mu - nu)

    slopes, residuals, spread = np.empty(n_index), np.empty(n_index), np.empty(n_index)
    excluded = np.zeros_like(errors, dtype=bool)
    warnings = []
    for j in range(n_index):
        slopes[j], residuals[j], used = fit_order(eps, errors[:, j])
        excluded[:, j] = ~used
        if (~used).any():
            warnings.append(f"index {j}: eps {eps[~used].tolist()} below numerical floor, excluded")
            logger.warning(f"⚠️ Index {j}: {int((~used).sum())} points below {NUMERICAL_FLOOR:g} excluded from fit")
        loo = leave_one_out(eps[used], errors[used, j]) if used.sum() > 2 else np.array([np.nan])
        spread[j] = float(np.nanmax(np.abs(loo - slopes[j]))) if np.isfinite(loo).any() else np.inf
    report = SweepReport(
        eps_values=eps,
        paired_errors=errors,
        fitted_orders=slopes,
        fit_residuals=residuals,
        grid_limits=np.stack([mu, nu]),
        excluded=excluded,
        loo_spread=spread,
        theory_order=theory_order,
        threshold=threshold,
        config_hash=config_hash,
        warnings=tuple(warnings),
    )
    logger.info(f"✅ Fitted orders {np.round(slopes, 4).tolist()} (theory {theory_order})")
    return report


def check_discretization(report: SweepReport, disc_errors: np.ndarray, fraction: float = 0.1) -> None:
    """Reject a sweep whose discretization error is not small against every ε-error."""
    disc = np.asarray(disc_errors, dtype=float)
    if disc.shape != report.paired_errors.shape:
        raise DimensionError(f"discretization errors {disc.shape} do not match paired errors {report.paired_errors.shape}")
    for j in range(report.paired_errors.shape[1]):
        used = ~report.excluded[:, j]
        if not used.any():
            continue
        smallest = report.paired_errors[used, j].min()
        worst = disc[used, j].max()
        if worst > fraction * smallest:
            logger.error(f"❌ Sweep rejected: discretization error {worst:.3e} vs smallest eps-error {smallest:.3e}")
            raise SweepRejected(
                f"index {j}: discretization error {worst:.3e} exceeds {fraction:g} x smallest eps-error {smallest:.3e}"
            )


def summary_lines(report: SweepReport) -> list[str]:
    lines = []
    for j, (slope, ok) in enumerate(zip(report.fitted_orders, report.passed)):
        lines.append(
            f"{j}, theory {report.theory_order:g}, fitted {slope:.4f}, {'PASS' if ok else 'FAIL'}"
        )
    return lines
