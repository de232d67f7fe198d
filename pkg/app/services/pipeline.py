# app/services/pipeline.py
"""Turns a validated RunConfig into domain objects and runs the frame, mode,
spectrum, sweep and self-test computations."""
import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from app.errors import AcceptanceFailure, ConfigError, GridError
from app.models import (
    AdiabaticOperator,
    CrossSectionShape,
    CurveKind,
    CurveSpec,
    FullProblem,
    FullSpectrum,
    ModeData,
    ParallelFrame,
    ProblemKind,
    ProfileKind,
    ShapeKind,
    Spectrum,
    SweepReport,
    TwistKind,
    TwistProfile,
)
from app.schemas import RunConfig
from app.services.adiabatic import assemble_hollow, assemble_massive, solve_1d
from app.services.compare import DEFAULT_EPS, check_discretization, pair_and_fit, richardson_columns
from app.services.cross_section import (
    bessel_zero,
    fiber_volume_profile,
    radial_disc_values,
    recentre,
    solve_ground_mode,
    solve_ground_mode_extrapolated,
)
from app.services.geometry import integrate_parallel_frame, reparametrize_arclength, twist_profile
from app.services.profiles import RadiusProfile, base_grid
from app.services.reference import solve_axisym_tube, solve_full, solve_hollow_surface, solve_strip
from app.storage import load_curve_table, load_mask, load_twist_table

logger = logging.getLogger("pipeline")

GRID_ORDER = 2


# ------------------ Builders ------------------
def build_curve(config: RunConfig, n_samples: int | None = None) -> CurveSpec:
    c = config.curve
    n = n_samples or c.N
    if c.kind == CurveKind.sampled:
        _, points = load_curve_table(c.table)
        return CurveSpec(c.kind, 0.0, n, points=points)
    return CurveSpec(c.kind, c.L, n, radius=c.R, a=c.a, b=c.b)


def default_e1(curve: CurveSpec) -> np.ndarray:
    """Unit normal at the start: the curvature direction, or any normal when
    the curve starts straight."""
    curve = reparametrize_arclength(curve)
    tau = curve.tangent[0]
    accel = curve.accel[0] - (curve.accel[0] @ tau) * tau
    if np.linalg.norm(accel) > 1e-10:
        return accel / np.linalg.norm(accel)
    axis = np.eye(3)[int(np.argmin(np.abs(tau)))]
    e1 = axis - (axis @ tau) * tau
    return e1 / np.linalg.norm(e1)


def build_frame(config: RunConfig, n_samples: int | None = None) -> ParallelFrame:
    curve = reparametrize_arclength(build_curve(config, n_samples))
    e1 = config.curve.e1 if config.curve.e1 is not None else default_e1(curve)
    return integrate_parallel_frame(curve, e1)


def build_shape(config: RunConfig) -> CrossSectionShape:
    fib = config.fiber
    center = tuple(fib.offset[:1]) if fib.shape == ShapeKind.interval else tuple(fib.offset)
    if fib.shape == ShapeKind.mask:
        return CrossSectionShape(fib.shape, grid=load_mask(fib.mask_file), spacing=fib.mask_spacing, center=center)
    return CrossSectionShape(
        fib.shape, halfwidth=fib.halfwidth, radius=fib.radius, a=fib.a, b=fib.b, center=center
    )


def scaled_shape(shape: CrossSectionShape, factor: float) -> CrossSectionShape:
    def grow(v):
        return None if v is None else v * factor

    return dataclasses.replace(
        shape,
        halfwidth=grow(shape.halfwidth),
        radius=grow(shape.radius),
        a=grow(shape.a),
        b=grow(shape.b),
        spacing=grow(shape.spacing),
        center=tuple(c * factor for c in shape.center),
    )


def problem_kind(config: RunConfig) -> ProblemKind:
    if config.hollow:
        return ProblemKind.hollow_surface
    if config.fiber.shape == ShapeKind.interval:
        return ProblemKind.strip
    if config.fiber.shape == ShapeKind.disc and config.twist.profile == TwistKind.none:
        return ProblemKind.axisym_tube
    return ProblemKind.twisted_tube


def build_profile(config: RunConfig, scale: float = 1.0) -> RadiusProfile:
    fib = config.fiber
    center = fib.profile_center if fib.profile_center is not None else 0.5 * config.curve.L
    return RadiusProfile(fib.profile, fib.base, fib.amplitude, fib.width, center, scale)


def reference_scale(config: RunConfig) -> float:
    """Size of the fibre folded into the profile by the mapped reference solvers."""
    if config.fiber.shape == ShapeKind.interval:
        return config.fiber.halfwidth
    if config.fiber.shape == ShapeKind.disc:
        return config.fiber.radius
    return 1.0


def build_twist(config: RunConfig, nodes: np.ndarray) -> TwistProfile | None:
    tw = config.twist
    if tw.profile == TwistKind.none:
        return None
    table = load_twist_table(tw.table) if tw.profile == TwistKind.table else None
    window = (tw.x_start, tw.x_end) if tw.profile == TwistKind.window else None
    return twist_profile(tw.profile, nodes, tw.rate, window, tw.smoothing, table)


def domain(config: RunConfig) -> tuple[float, float]:
    return 0.0, config.curve.L


def is_straight(config: RunConfig) -> bool:
    return config.curve.kind == CurveKind.line


# ------------------ Mode ------------------
def solve_mode(config: RunConfig) -> tuple[ModeData, float | None]:
    """Fibre ground state. Discs about the origin take their constants from
    the radial ground state; other shapes have λ₀ replaced by its
    grid-extrapolated value when the configuration asks for it, with the
    error estimate kept on the mode. Returns (mode, extrapolated λ₀ or None)."""
    fib = config.fiber
    shape = build_shape(config)
    n = fib.n_grid
    radial = shape.kind == ShapeKind.disc and (fib.centred or not any(shape.center))
    extrapolated = None
    if fib.extrapolate and not radial and shape.kind != ShapeKind.mask:
        estimate, modes = solve_ground_mode_extrapolated(shape, n)
        mode = dataclasses.replace(modes[-1], lambda0=estimate.value, lambda0_error=estimate.error)
        extrapolated = estimate.value
    else:
        mode = solve_ground_mode(shape, n)
    if fib.centred:
        mode = recentre(mode)
        logger.info(f"✅ Fibre recentred, centre of mass now {mode.com}")
    if radial:
        mode = radial_disc_values(mode, n)
    return mode, extrapolated


# ------------------ Single-eps spectra ------------------
@dataclass(frozen=True, eq=False)
class SpectrumResult:
    eps: float
    operator: AdiabaticOperator | None
    adiabatic: Spectrum | None
    full: FullSpectrum | None


def _check_reference(config: RunConfig, kind: ProblemKind) -> None:
    if not is_straight(config):
        raise ConfigError("reference solvers need a straight base curve (curve.kind = line)")
    if kind == ProblemKind.twisted_tube:
        if config.fiber.profile != ProfileKind.constant:
            raise ConfigError("twisted tubes need a constant fiber.profile")
    elif any(config.fiber.offset):
        raise ConfigError(f"the {kind.value} reference solver needs fiber.offset = 0, 0")


def adiabatic_operator(
    config: RunConfig, mode: ModeData | None, eps: float, nx: int, frame: ParallelFrame | None = None
) -> AdiabaticOperator:
    kind = problem_kind(config)
    if kind == ProblemKind.hollow_surface:
        x = base_grid(domain(config), nx)
        f = build_profile(config).sample(x)
        return assemble_hollow(fiber_volume_profile(build_shape(config), f.f, x), eps)
    if not is_straight(config) and frame is None:
        frame = build_frame(config, nx + 1)
    x = frame.nodes if frame is not None else base_grid(domain(config), nx)
    f = build_profile(config).sample(x)
    tw = build_twist(config, x)
    return assemble_massive(
        frame, mode, tw, f, eps, alpha=config.spectrum.alpha, include_eps3=config.spectrum.include_eps3
    )


def full_problem(config: RunConfig, eps: float, nx: int, nn: int, max_unknowns: int, m: int = 0) -> FullProblem:
    kind = problem_kind(config)
    _check_reference(config, kind)
    n_eigs = config.spectrum.n_eigs
    if kind == ProblemKind.twisted_tube:
        shape = scaled_shape(build_shape(config), config.fiber.base)
        twist = build_twist(config, base_grid(domain(config), nx))
        return FullProblem(kind, None, eps, nx, nn, domain(config), 0, shape, twist, n_eigs, max_unknowns)
    profile = build_profile(config, reference_scale(config))
    return FullProblem(kind, profile, eps, nx, nn, domain(config), m, n_eigs=n_eigs, max_unknowns=max_unknowns)


def run_spectrum(config: RunConfig, mode: ModeData | None, max_unknowns: int) -> SpectrumResult:
    """Adiabatic and full spectra at ``spectrum.eps``.

    The adiabatic side describes the ground fibre mode, so it is skipped for
    angular modes m > 0; the full side needs a straight base curve.
    """
    s = config.spectrum
    kind = problem_kind(config)
    operator = adiabatic = full = None
    if s.m == 0 and (mode is not None or kind == ProblemKind.hollow_surface):
        operator = adiabatic_operator(config, mode, s.eps, s.nx)
        adiabatic = solve_1d(operator, s.n_eigs)
    else:
        logger.warning(f"⚠️ Angular mode m={s.m}: only the full spectrum is computed")
    if is_straight(config):
        if s.m > 0 and kind not in (ProblemKind.axisym_tube, ProblemKind.hollow_surface):
            raise ConfigError(f"spectrum.m applies to axisymmetric and hollow problems, not {kind.value}")
        full = solve_full(full_problem(config, s.eps, s.nx, s.nn, max_unknowns, s.m))
    else:
        logger.warning("⚠️ Curved base curve: no reference solver, adiabatic spectrum only")
    return SpectrumResult(s.eps, operator, adiabatic, full)


# ------------------ Sweeps ------------------
def refine(n: int, level: int) -> int:
    """Interior node count whose grid spacing is halved ``level`` times."""
    return (n + 1) * 2 ** level - 1


@dataclass(frozen=True, eq=False)
class SweepOutcome:
    report: SweepReport
    eps: np.ndarray
    levels: np.ndarray
    grids: list[tuple[int, int]]
    mu: np.ndarray
    nu: np.ndarray
    disc_errors: np.ndarray


def _sweep_point(config: RunConfig, mode: ModeData | None, eps: float, nx: int, nn: int, max_unknowns: int):
    n_eigs = config.spectrum.n_eigs
    operator = adiabatic_operator(config, mode, eps, nx)
    mu = solve_1d(operator, n_eigs).eigenvalues
    nu = solve_full(full_problem(config, eps, nx, nn, max_unknowns)).eigenvalues
    bottom = float(np.min(operator.bundle.lambda0[1:-1]))
    return mu[:n_eigs], nu[:n_eigs], bottom


def run_sweep(config: RunConfig, mode: ModeData | None, threads: int, max_unknowns: int, config_hash: str = "") -> SweepOutcome:
    """ε-grid × refinement levels, Richardson per ε, fitted orders per index.

    Every (ε, level) point is independent and runs on the thread pool; results
    are placed by index.
    """
    sw = config.sweep
    _check_reference(config, problem_kind(config))
    eps = np.asarray(sw.eps, dtype=float)
    grids = [(refine(sw.nx, level), refine(sw.nn, level)) for level in range(sw.levels)]
    tasks = [(i, level) for i in range(len(eps)) for level in range(sw.levels)]
    logger.info(f"🚀 Sweep over {len(eps)} eps values x {sw.levels} levels on {threads} thread(s)")
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(_sweep_point, config, mode, eps[i], *grids[level], max_unknowns) for i, level in tasks
        ]
        results = [f.result() for f in futures]

    n_eigs = min(min(len(mu), len(nu)) for mu, nu, _ in results)
    mu = np.empty((len(eps), sw.levels, n_eigs))
    nu = np.empty_like(mu)
    bottom = np.empty(len(eps))
    for (i, level), (m_vals, n_vals, low) in zip(tasks, results):
        mu[i, level], nu[i, level] = m_vals[:n_eigs], n_vals[:n_eigs]
        bottom[i] = low

    mu_lim, nu_lim = np.empty((len(eps), n_eigs)), np.empty((len(eps), n_eigs))
    disc = np.empty((len(eps), n_eigs))
    monotone = True
    for i in range(len(eps)):
        mu_lim[i], mu_err, mu_mono = richardson_columns(mu[i], GRID_ORDER)
        nu_lim[i], nu_err, nu_mono = richardson_columns(nu[i], GRID_ORDER)
        disc[i] = mu_err + nu_err
        monotone &= bool(mu_mono.all() and nu_mono.all())
    if mode is not None and mode.lambda0_error > 0:
        # λ₀(x) = λ₀ / f², so the fibre error is largest at the narrowest fibre
        f = build_profile(config).sample(base_grid(domain(config), sw.nx)).f
        fibre = mode.lambda0_error / float(np.min(f ** 2))
        logger.info(f"Fibre lambda0 error adds {fibre:.2e} to the discretization estimate")
        disc += fibre

    if sw.window_C is not None:
        alpha = config.spectrum.alpha
        inside = [(mu_lim[i] <= bottom[i] + sw.window_C * eps[i] ** alpha).sum() for i in range(len(eps))]
        n_keep = int(min(inside))
        if n_keep == 0:
            raise GridError(f"spectral window with C={sw.window_C} holds no eigenvalue")
        if n_keep < n_eigs:
            logger.warning(f"⚠️ Spectral window keeps {n_keep} of {n_eigs} eigenvalue indices")
        mu_lim, nu_lim, disc = mu_lim[:, :n_keep], nu_lim[:, :n_keep], disc[:, :n_keep]

    theory = sw.theory_order if sw.theory_order is not None else 2.0 + config.spectrum.alpha
    adiabatic = [Spectrum(mu_lim[i], np.zeros(mu_lim.shape[1])) for i in range(len(eps))]
    full = [
        FullSpectrum(problem_kind(config), float(eps[i]), 0, nu_lim[i], np.zeros(nu_lim.shape[1]), *grids[-1])
        for i in range(len(eps))
    ]
    report = pair_and_fit(adiabatic, full, eps, theory, sw.threshold, config_hash)
    if not monotone:
        report = dataclasses.replace(
            report, monotone=False, warnings=report.warnings + ("non-monotone grid refinement sequence",)
        )
    # pair_and_fit orders eps descending; keep the other arrays aligned.
    order = np.argsort(-eps, kind="stable")
    return SweepOutcome(report, eps[order], np.arange(sw.levels), grids, mu[order], nu[order], disc[order])


def reject_dominated(outcome: SweepOutcome, fraction: float) -> None:
    """Raise SweepRejected when discretization error dominates some ε-error."""
    check_discretization(outcome.report, outcome.disc_errors, fraction)


def judge_sweep(outcome: SweepOutcome) -> None:
    """Raise AcceptanceFailure on a fitted order below threshold."""
    failed = np.flatnonzero(~outcome.report.passed)
    if failed.size:
        orders = outcome.report.fitted_orders[failed]
        raise AcceptanceFailure(
            f"fitted orders {np.round(orders, 4).tolist()} at indices {failed.tolist()} "
            f"below {outcome.report.threshold:g} or not robust"
        )
    logger.info("✅ Sweep passed")


# ------------------ Self-test ------------------
@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    expected: float
    tolerance: float

    @property
    def rel_error(self) -> float:
        return abs(self.value - self.expected) / max(abs(self.expected), 1e-300)

    @property
    def passed(self) -> bool:
        return self.rel_error <= self.tolerance


def _synthetic_order() -> list[CheckResult]:
    eps = np.asarray(DEFAULT_EPS)
    adiabatic = [Spectrum(np.array([1.0 + 0.7 * e ** 3]), np.zeros(1)) for e in eps]
    full = [FullSpectrum(ProblemKind.strip, float(e), 0, np.array([1.0]), np.zeros(1), 0, 0) for e in eps]
    report = pair_and_fit(adiabatic, full, eps)
    return [CheckResult("synthetic eps^3 order", float(report.fitted_orders[0]), 3.0, 1e-6)]


def _strip_oracle(eps: float = 0.1) -> list[CheckResult]:
    spec = solve_strip(RadiusProfile(), eps, 200, 63)
    return [
        CheckResult(f"strip nu_{j - 1}", float(v), np.pi ** 2 / 4 + eps ** 2 * j ** 2, 1e-3)
        for j, v in enumerate(spec.eigenvalues, start=1)
    ]


def _tube_oracle(eps: float = 0.1) -> list[CheckResult]:
    j01 = bessel_zero(0)
    spec = solve_axisym_tube(RadiusProfile(), eps, 0, 200, 63)
    return [
        CheckResult(f"tube nu_{j - 1}", float(v), j01 ** 2 + eps ** 2 * j ** 2, 2e-3)
        for j, v in enumerate(spec.eigenvalues, start=1)
    ]


def _hollow_oracle(eps: float = 0.1) -> list[CheckResult]:
    spec = solve_hollow_surface(RadiusProfile(), eps, 0, 1000)
    return [
        CheckResult(f"hollow cylinder nu_{j - 1}", float(v), eps ** 2 * j ** 2, 1e-4)
        for j, v in enumerate(spec.eigenvalues, start=1)
    ]


def _fibre_oracles() -> list[CheckResult]:
    interval, _ = solve_ground_mode_extrapolated(CrossSectionShape(ShapeKind.interval, halfwidth=1.0))
    disc, _ = solve_ground_mode_extrapolated(CrossSectionShape(ShapeKind.disc, radius=1.0), 128, levels=2)
    return [
        CheckResult("interval lambda0", interval.value, np.pi ** 2 / 4, 1e-9),
        CheckResult("disc lambda0", disc.value, bessel_zero(0) ** 2, 5e-3),
    ]


def _bessel_oracles() -> list[CheckResult]:
    """Series-and-bisection zeros against the scipy Bessel zeros."""
    return [
        CheckResult("first zero of J0", bessel_zero(0), float(special.jn_zeros(0, 1)[0]), 1e-12),
        CheckResult("first zero of J1", bessel_zero(1), float(special.jn_zeros(1, 1)[0]), 1e-12),
    ]


SELFTEST_CHECKS = (_synthetic_order, _bessel_oracles, _fibre_oracles, _strip_oracle, _tube_oracle, _hollow_oracle)


def run_selftest(threads: int = 1) -> list[CheckResult]:
    with ThreadPoolExecutor(max_workers=threads) as pool:
        groups = list(pool.map(lambda check: check(), SELFTEST_CHECKS))
    results = [r for group in groups for r in group]
    for r in results:
        mark = "✅" if r.passed else "❌"
        logger.info(f"{mark} {r.name}: {r.value:.12g} vs {r.expected:.12g} (rel {r.rel_error:.2e})")
    return results
