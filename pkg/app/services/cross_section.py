# app/services/cross_section.py
"""Fibre eigenproblem: Dirichlet ground state of a cross-section and the
fibre integrals that feed the effective potentials."""
import dataclasses
import logging

import numpy as np
from scipy import sparse
from scipy.integrate import quad, trapezoid
from scipy.optimize import bisect
from scipy.special import factorial

from app.errors import DimensionError, GridError
from app.models import CrossSectionShape, FiberVolumeProfile, ModeData, ShapeKind
from app.services.compare import RichardsonEstimate, richardson
from app.services.linalg import inverse_power_iteration, masked_gradient, masked_laplacian, weighted_similarity

logger = logging.getLogger("cross_section")

BESSEL_TERMS = 40


# ------------------ Bessel oracles ------------------
def bessel_j(order: int, x: float) -> float:
    """J_order(x) from its power series."""
    m = np.arange(BESSEL_TERMS)
    terms = (-1.0) ** m * (x / 2.0) ** (2 * m + order) / (factorial(m) * factorial(m + order))
    return float(terms.sum())


def bessel_zero(order: int = 0, bracket: tuple[float, float] | None = None) -> float:
    """First positive zero of J_0 or J_1 by bisection on the power series."""
    if bracket is None:
        bracket = {0: (2.0, 3.0), 1: (3.0, 4.5)}[order]
    return bisect(lambda x: bessel_j(order, x), *bracket, xtol=1e-15, rtol=4 * np.finfo(float).eps)


# ------------------ Grids ------------------
def fibre_grid(shape: CrossSectionShape, n_grid: int):
    """(axes, mask, spacing) of the square bounding-box grid."""
    if shape.kind == ShapeKind.mask:
        mask = np.array(shape.grid, dtype=bool)
        h = shape.spacing
        axes = tuple((np.arange(n) - 0.5 * (n - 1)) * h + c for n, c in zip(mask.shape, shape.center))
    else:
        if n_grid < 32:
            raise GridError(f"fibre grid needs n_grid >= 32, got {n_grid}")
        R = shape.extent
        axes = tuple(np.linspace(-R, R, n_grid) + shape.center[i] for i in range(shape.dim))
        h = float(axes[0][1] - axes[0][0])
        mask = shape.contains(*np.meshgrid(*axes, indexing="ij"))
    # Box faces are always Dirichlet nodes.
    for axis in range(mask.ndim):
        index = [slice(None)] * mask.ndim
        for edge in (0, -1):
            index[axis] = edge
            mask[tuple(index)] = False
    if not mask.any():
        raise GridError(f"{shape.kind.value} fibre has no interior nodes on a {n_grid} grid")
    return axes, mask, h


def fibre_volume(shape: CrossSectionShape, mask: np.ndarray, h: float) -> float:
    if shape.kind == ShapeKind.interval:
        return 2.0 * shape.halfwidth
    if shape.kind == ShapeKind.disc:
        return np.pi * shape.radius ** 2
    if shape.kind == ShapeKind.ellipse:
        return np.pi * shape.a * shape.b
    if shape.kind == ShapeKind.rectangle:
        return 4.0 * shape.a * shape.b
    return float(mask.sum()) * h ** 2


def integrate(mode: ModeData, values: np.ndarray) -> float:
    """Trapezoidal quadrature over the fibre box."""
    out = values
    for _ in range(mode.dim):
        out = trapezoid(out, dx=mode.spacing, axis=0)
    return float(out)


# ------------------ Ground mode ------------------
def solve_ground_mode(shape: CrossSectionShape, n_grid: int) -> ModeData:
    axes, mask, h = fibre_grid(shape, n_grid)
    lam, vec, residual = inverse_power_iteration(masked_laplacian(mask, h))
    phi = np.zeros(mask.shape)
    phi[mask] = vec
    if phi.sum() < 0:
        phi = -phi
    mode = ModeData(
        shape=shape,
        lambda0=lam,
        phi0=phi,
        axes=axes,
        spacing=h,
        mask=mask,
        volume=fibre_volume(shape, mask, h),
        residual=residual,
    )
    phi = phi / np.sqrt(integrate(mode, phi ** 2))
    mode = dataclasses.replace(mode, phi0=phi)
    mode = dataclasses.replace(mode, com=center_of_mass(mode))
    L_norm_sq = angular_momentum_norm(mode) if mode.dim == 2 else 0.0
    mode = dataclasses.replace(mode, L_norm_sq=L_norm_sq)
    logger.info(f"✅ {shape.kind.value} ground mode: lambda0={lam:.10g} on {mask.shape} grid, |L phi|^2={L_norm_sq:.3e}")
    return mode


def halved_grid(n_grid: int, level: int) -> int:
    """Node count of the box grid whose spacing is halved ``level`` times."""
    return (n_grid - 1) * 2 ** level + 1


def solve_ground_mode_extrapolated(
    shape: CrossSectionShape, n_grid: int = 128, levels: int = 3, order: int | None = None
) -> tuple[RichardsonEstimate, list[ModeData]]:
    """λ₀ Richardson-extrapolated over ``levels`` halvings of the box spacing.

    The interval converges at second order with an O(h⁴) remainder; staircase
    boundaries are taken as first order with an O(h²) remainder. With three
    levels ``estimate.error`` bounds the extrapolated value.
    """
    if shape.kind == ShapeKind.mask:
        raise GridError("a mask fibre has a fixed spacing and cannot be refined")
    if order is None:
        order = 2 if shape.kind == ShapeKind.interval else 1
    modes = [solve_ground_mode(shape, halved_grid(n_grid, level)) for level in range(levels)]
    ratio = modes[-2].spacing / modes[-1].spacing
    estimate = richardson([m.lambda0 for m in modes], order, ratio, 2 * order)
    logger.info(f"✅ {shape.kind.value} lambda0 extrapolated to {estimate.value:.12g} (error {estimate.error:.2e})")
    return estimate, modes


def recentre(mode: ModeData) -> ModeData:
    """Shift fibre coordinates so that the centre of mass sits at the origin."""
    shift = mode.com[: mode.dim]
    axes = tuple(ax - c for ax, c in zip(mode.axes, shift))
    moved = dataclasses.replace(mode, axes=axes)
    moved = dataclasses.replace(moved, com=center_of_mass(moved))
    return dataclasses.replace(moved, L_norm_sq=angular_momentum_norm(moved) if moved.dim == 2 else 0.0)


# ------------------ Centred discs ------------------
def polar_disc_operators(radius: float, n_grid: int):
    """(weighted −Δ_n, L = ∂_θ, weights) on a cell-centred polar grid.

    Radial nodes sit at (i − ½)h; the disc edge is the Dirichlet node i = N_r + 1.
    """
    n_r, n_t = max(n_grid // 2, 8), 4 * max(n_grid // 2, 8)
    h_r, h_t = radius / (n_r + 0.5), 2.0 * np.pi / n_t
    r = (np.arange(1, n_r + 1) - 0.5) * h_r
    r_face = np.arange(1, n_r + 1) * h_r
    radial = sparse.diags(
        [-r_face[:-1] * h_t / h_r, (np.concatenate([[0.0], r_face[:-1]]) + r_face) * h_t / h_r, -r_face[:-1] * h_t / h_r],
        [-1, 0, 1],
    )
    ring = sparse.diags([np.full(n_t - 1, -1.0), np.full(n_t, 2.0), np.full(n_t - 1, -1.0)], [-1, 0, 1]).tolil()
    ring[0, -1] = ring[-1, 0] = -1.0
    ring = ring.tocsr() / h_t ** 2
    angular = sparse.diags(h_r * h_t / r)
    stiffness = sparse.kron(radial, sparse.eye(n_t)) + sparse.kron(angular, ring)
    shift = sparse.diags([np.full(n_t - 1, 0.5 / h_t), np.full(n_t - 1, -0.5 / h_t)], [1, -1]).tolil()
    shift[0, -1], shift[-1, 0] = -0.5 / h_t, 0.5 / h_t
    L = sparse.kron(sparse.eye(n_r), shift.tocsr())
    weights = np.repeat(r * h_r * h_t, n_t)
    return stiffness.tocsr(), L.tocsr(), weights


def disc_dilation_constant() -> float:
    """C_F of the unit disc from Φ₀ = J₀(j r) / (√π J₁(j)), j the first zero of J₀.

    EΦ₀ = Φ₀ + rΦ₀' and C_F = 2π ∫₀¹ (EΦ₀)² r dr; the value is radius free.
    """
    j = bessel_zero(0)
    norm = 2.0 / bessel_j(1, j) ** 2

    def integrand(r: float) -> float:
        return (bessel_j(0, j * r) - j * r * bessel_j(1, j * r)) ** 2 * r

    value, _ = quad(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    return norm * value


def radial_disc_values(mode: ModeData, n_grid: int) -> ModeData:
    """Disc mode with boundary-fitted fibre constants about the disc centre.

    λ₀ = (j/R)² and C_F come from the Bessel ground state and ‖LΦ₀‖² from the
    polar grid the twisted reference solver uses; the staircase field is kept
    for output and the curvature moments.
    """
    shape = mode.shape
    if shape.kind != ShapeKind.disc:
        raise DimensionError(f"radial ground state needs a disc, got {shape.kind.value}")
    stiffness, L, weights = polar_disc_operators(shape.radius, n_grid)
    _, v, _ = inverse_power_iteration(weighted_similarity(stiffness, weights))
    u = v / np.sqrt(weights)
    L_norm_sq = float(weights @ (L @ u) ** 2 / (v @ v))
    lam = (bessel_zero(0) / shape.radius) ** 2
    logger.info(f"✅ Radial disc: lambda0={lam:.12g} (staircase {mode.lambda0:.8g}), |L phi|^2={L_norm_sq:.2e}")
    return dataclasses.replace(mode, lambda0=lam, lambda0_error=0.0, C_F=disc_dilation_constant(), L_norm_sq=L_norm_sq)


# ------------------ Fibre functionals ------------------
def angular_operator(axes, mask: np.ndarray, h: float) -> sparse.csr_matrix:
    """L = n¹∂₂ − n²∂₁ on the mask nodes with masked central differences."""
    n1, n2 = (c[mask] for c in np.meshgrid(*axes, indexing="ij"))
    L = sparse.diags(n1) @ masked_gradient(mask, h, 1) - sparse.diags(n2) @ masked_gradient(mask, h, 0)
    return L.tocsr()


def angular_momentum(mode: ModeData) -> np.ndarray:
    """LΦ₀ on the mask nodes."""
    return angular_operator(mode.axes, mode.mask, mode.spacing) @ mode.phi0[mode.mask]


def angular_momentum_norm(mode: ModeData) -> float:
    """‖LΦ₀‖² = h² φᵀLᵀLφ over the mask."""
    if mode.dim != 2:
        raise DimensionError("angular momentum needs a 2D fibre")
    return float(np.sum(angular_momentum(mode) ** 2) * mode.spacing ** 2)


def center_of_mass(mode: ModeData) -> np.ndarray:
    density = mode.phi0 ** 2
    com = np.zeros(2)
    for i, n in enumerate(mode.coordinates()):
        com[i] = integrate(mode, n * density)
    return com


def scaled_mode_functionals(mode: ModeData) -> tuple[float, np.ndarray, np.ndarray]:
    """(C_F, p, q) for the scaled-fibre generator E = k/2 + s·∇:
    C_F = ∫|EΦ₀|², p_α = ∫ s_α Φ₀ EΦ₀, q_α = ∫ s_α Φ₀ E²Φ₀."""
    coords = mode.coordinates()
    phi = mode.phi0
    E_phi = _euler(mode, phi, coords)
    E2_phi = _euler(mode, E_phi, coords)
    C_F = integrate(mode, E_phi ** 2)
    p, q = np.zeros(2), np.zeros(2)
    for i, s in enumerate(coords):
        p[i] = integrate(mode, s * phi * E_phi)
        q[i] = integrate(mode, s * phi * E2_phi)
    return C_F, p, q


def _euler(mode: ModeData, values: np.ndarray, coords) -> np.ndarray:
    grads = np.gradient(values, mode.spacing)
    if mode.dim == 1:
        grads = [grads]
    return 0.5 * mode.dim * values + sum(s * g for s, g in zip(coords, grads))


def lambda0_profile(base_mode: ModeData, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise GridError("fibre scale f must be positive")
    return base_mode.lambda0 / f ** 2


def adiabatic_va_profile(base_mode: ModeData, f: np.ndarray, f_prime: np.ndarray) -> np.ndarray:
    """Born-Huang potential (f'/f)² C_F of the scaled fibres f(x)·F."""
    C_F = base_mode.C_F if base_mode.C_F is not None else scaled_mode_functionals(base_mode)[0]
    return (np.asarray(f_prime) / np.asarray(f)) ** 2 * C_F


def fiber_volume_profile(shape: CrossSectionShape, f: np.ndarray, x: np.ndarray) -> FiberVolumeProfile:
    """Boundary measure |∂F|·f(x) of hollow fibres with log-derivatives."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise GridError("fibre scale f must be positive")
    x = np.asarray(x, dtype=float)
    vol = shape.perimeter * f
    log_vol = np.log(vol)
    dlog = np.gradient(log_vol, x, edge_order=2)
    d2log = second_derivative(log_vol, x)
    return FiberVolumeProfile(x, vol, dlog, d2log)


def second_derivative(values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Three-point second difference on a uniform grid, extrapolated ends."""
    h = float(x[1] - x[0])
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / h ** 2
    out[0] = 2.0 * out[1] - out[2]
    out[-1] = 2.0 * out[-2] - out[-3]
    return out
