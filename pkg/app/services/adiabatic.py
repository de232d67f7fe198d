# app/services/adiabatic.py
"""Effective (adiabatic) operator on the base interval: potentials, assembly
and the tridiagonal spectral solve."""
import logging

import numpy as np

from app.errors import ConvergenceError, DimensionError, GridError
from app.models import (
    AdiabaticOperator,
    FiberVolumeProfile,
    ModeData,
    ParallelFrame,
    PotentialBundle,
    Spectrum,
    SurfaceOfRevolution,
    TwistProfile,
)
from app.services.cross_section import (
    adiabatic_va_profile,
    lambda0_profile,
    scaled_mode_functionals,
)
from app.services.geometry import density_on_fibre
from app.services.linalg import tridiagonal_eigenpairs

logger = logging.getLogger("adiabatic")

RESIDUAL_TOL = 1e-9


# ------------------ Potentials ------------------
def _fibre_points(mode: ModeData):
    """Fibre coordinates (n¹, n²) and quadrature weights |φ₀|² h^k on the mask."""
    coords = mode.coordinates()
    n1 = coords[0][mode.mask]
    n2 = coords[1][mode.mask] if mode.dim == 2 else np.zeros_like(n1)
    weights = mode.phi0[mode.mask] ** 2 * mode.spacing ** mode.dim
    return n1, n2, weights


def bending_potential_d1(frame: ParallelFrame, mode: ModeData, eps: float, f: np.ndarray | None = None) -> np.ndarray:
    """Fibre average of −|κ|²/4ρ² − ε n·κ''/2ρ³ − 5(ε n·κ')²/4ρ⁴ over |φ₀|².

    With a scale profile ``f`` the fibre at x is f(x)·F.
    """
    kappa = frame.kappa
    d_kappa = np.gradient(kappa, frame.h, axis=0, edge_order=2)
    d2_kappa = np.gradient(d_kappa, frame.h, axis=0, edge_order=2)
    s1, s2, weights = _fibre_points(mode)
    scale = np.ones(len(frame.nodes)) if f is None else np.asarray(f, dtype=float)
    if len(scale) != len(frame.nodes):
        raise DimensionError(f"profile has {len(scale)} nodes, frame has {len(frame.nodes)}")
    out = np.empty(len(frame.nodes))
    for i in range(len(frame.nodes)):
        n1, n2 = scale[i] * s1, scale[i] * s2
        rho = density_on_fibre(kappa[i], eps, n1, n2)
        nk2 = n1 * d2_kappa[i, 0] + n2 * d2_kappa[i, 1]
        nk1 = n1 * d_kappa[i, 0] + n2 * d_kappa[i, 1]
        v = (
            -(kappa[i] @ kappa[i]) / (4.0 * rho ** 2)
            - eps * nk2 / (2.0 * rho ** 3)
            - 5.0 * (eps * nk1) ** 2 / (4.0 * rho ** 4)
        )
        out[i] = float(v @ weights)
    return out


def twist_potential(tw: TwistProfile, L_norm_sq: float) -> np.ndarray:
    return tw.omega_prime ** 2 * L_norm_sq


def twist_potential_general(Rdot: np.ndarray, Lmat: np.ndarray) -> np.ndarray:
    """Σ Ṙ^{(αβ)} Ṙ^{(γζ)} L_{(αβ),(γζ)} over the generators α < β.

    ``Rdot`` has shape (N, k, k) and is antisymmetric per node; ``Lmat`` is the
    Gram matrix of the L_{αβ}Φ₀ in the same (α < β) ordering.
    """
    R = np.asarray(Rdot, dtype=float)
    L = np.atleast_2d(np.asarray(Lmat, dtype=float))
    if R.ndim != 3 or R.shape[1] != R.shape[2]:
        raise DimensionError(f"Rdot must have shape (N, k, k), got {R.shape}")
    k = R.shape[1]
    rows, cols = np.triu_indices(k, 1)
    if L.shape != (len(rows), len(rows)):
        raise DimensionError(f"Lmat must be {len(rows)}x{len(rows)} for k={k}, got {L.shape}")
    if not np.allclose(R, -np.transpose(R, (0, 2, 1))):
        raise DimensionError("Rdot must be antisymmetric")
    coeffs = R[:, rows, cols]
    return np.einsum("xi,ij,xj->x", coeffs, L, coeffs)


def hollow_potential(fv: FiberVolumeProfile, eps: float) -> np.ndarray:
    return eps ** 2 * (0.5 * fv.d2log + 0.25 * fv.dlog ** 2)


def eta_bar_hollow(fv: FiberVolumeProfile) -> np.ndarray:
    """Fibre mean of the mean-curvature form, −(log|F_x|)', for uniform hollow fibres.

    The hollow potential is ε²(¼ η̄² − ½ η̄').
    """
    return -fv.dlog


def eps3_corrections_d1(frame: ParallelFrame, mode: ModeData, f: SurfaceOfRevolution | None = None):
    """(m, pot) of the first-order curvature corrections.

    m(x) = ∫ (n·κ)|φ₀|² dn and pot(x) = −2 ∫ φ₀ ∂_x[(n·κ) ∂_x φ₀] dn, for
    fibres f(x)·F (f ≡ 1 when omitted).
    """
    kappa = frame.kappa
    n = len(frame.nodes)
    if f is None:
        fv, fp, fpp = np.ones(n), np.zeros(n), np.zeros(n)
    else:
        if len(f.f) != n:
            raise DimensionError(f"profile has {len(f.f)} nodes, frame has {n}")
        fv, fp, fpp = f.f, f.f_prime, f.f_prime2
    com = mode.com
    _, p, q = scaled_mode_functionals(mode)
    d_kappa = np.gradient(kappa, frame.h, axis=0, edge_order=2)
    m = fv * (kappa @ com)
    pot = -2.0 * (
        -(fpp * (kappa @ p) + fp * (d_kappa @ p)) + (fp ** 2 / fv) * (kappa @ (p + q))
    )
    return m, pot


# ------------------ Assembly ------------------
def assemble_massive(
    frame: ParallelFrame | None,
    mode: ModeData,
    tw: TwistProfile | None,
    f: SurfaceOfRevolution,
    eps: float,
    alpha: int = 2,
    include_eps3: bool = True,
) -> AdiabaticOperator:
    """−ε²d²/dx² + λ₀ + ε²(V_a + V_bend^a) with the ε³ corrections.

    alpha=2 adds ε³·pot and the divergence term −2ε³(mψ')'; alpha=1 keeps only
    the divergence term.
    """
    if alpha not in (1, 2):
        raise DimensionError(f"alpha must be 1 or 2, got {alpha}")
    x = f.nodes
    n = len(x)
    if frame is not None and len(frame.nodes) != n:
        raise DimensionError(f"frame has {len(frame.nodes)} nodes, profile has {n}")
    if tw is not None and len(tw.omega_prime) != n:
        raise DimensionError(f"twist has {len(tw.omega_prime)} nodes, profile has {n}")

    lam = lambda0_profile(mode, f.f)
    v_a = adiabatic_va_profile(mode, f.f, f.f_prime)
    if tw is not None:
        v_a = v_a + twist_potential(tw, mode.L_norm_sq)
    zeros = np.zeros(n)
    if frame is None:
        v_bend, m, pot = zeros, zeros, zeros
    else:
        v_bend = bending_potential_d1(frame, mode, eps, f.f)
        m, pot = eps3_corrections_d1(frame, mode, f) if include_eps3 else (zeros, zeros)
    if alpha == 1:
        pot = zeros
    bundle = PotentialBundle(x, lam, v_a, v_bend, zeros, m, pot, eps)
    potential = lam + eps ** 2 * (v_a + v_bend) + eps ** 3 * pot
    coeff = eps ** 2 + 2.0 * eps ** 3 * m
    logger.info(f"✅ Massive operator assembled (alpha={alpha}, eps={eps}, n={n})")
    return tridiagonal_operator(bundle, potential, coeff)


def assemble_hollow(fv: FiberVolumeProfile, eps: float) -> AdiabaticOperator:
    x = fv.nodes
    zeros = np.zeros(len(x))
    v = hollow_potential(fv, eps)
    bundle = PotentialBundle(x, zeros, zeros, zeros, v, zeros, zeros, eps)
    return tridiagonal_operator(bundle, v, np.full(len(x), eps ** 2))


def tridiagonal_operator(bundle: PotentialBundle, potential: np.ndarray, coeff: np.ndarray) -> AdiabaticOperator:
    """Divergence-form −(c ψ')' + Vψ with staggered c_{i+½} on the interior nodes."""
    x = bundle.x
    h = float(x[1] - x[0])
    if not np.allclose(np.diff(x), h, rtol=1e-9, atol=0.0):
        raise GridError("base grid must be uniform")
    c_mid = 0.5 * (coeff[1:] + coeff[:-1])
    if np.any(c_mid <= 0):
        raise GridError("kinetic coefficient eps^2 + 2 eps^3 m is not positive")
    diagonal = (c_mid[:-1] + c_mid[1:]) / h ** 2 + potential[1:-1]
    offdiagonal = -c_mid[1:-1] / h ** 2
    return AdiabaticOperator(bundle=bundle, h=h, diagonal=diagonal, offdiagonal=offdiagonal)


def apply(op: AdiabaticOperator, psi: np.ndarray, boundary: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Matrix-free H ψ on the interior nodes, with ψ given on the interior or on
    all nodes (then the end values enter as boundary data)."""
    psi = np.asarray(psi, dtype=float)
    n = len(op.diagonal)
    if len(psi) == n + 2:
        boundary = (psi[0], psi[-1])
        psi = psi[1:-1]
    if len(psi) != n:
        raise DimensionError(f"psi has {len(psi)} values, operator has {n} interior nodes")
    out = op.diagonal * psi
    out[:-1] += op.offdiagonal * psi[1:]
    out[1:] += op.offdiagonal * psi[:-1]
    coeff_ends = _end_couplings(op)
    out[0] -= coeff_ends[0] * boundary[0]
    out[-1] -= coeff_ends[1] * boundary[1]
    return out


def _end_couplings(op: AdiabaticOperator) -> tuple[float, float]:
    b = op.bundle
    c = b.eps ** 2 + 2.0 * b.eps ** 3 * b.eps3_div_coeff
    return 0.5 * (c[0] + c[1]) / op.h ** 2, 0.5 * (c[-1] + c[-2]) / op.h ** 2


# ------------------ Spectrum ------------------
def solve_1d(op: AdiabaticOperator, n_eigs: int) -> Spectrum:
    if n_eigs < 1:
        raise DimensionError("n_eigs must be at least 1")
    values, vectors, residuals = tridiagonal_eigenpairs(op.diagonal, op.offdiagonal, n_eigs)
    if np.any(residuals > RESIDUAL_TOL):
        logger.error(f"❌ Tridiagonal eigenpairs above tolerance: {residuals.max():.3e}")
        raise ConvergenceError("tridiagonal eigensolver residual above tolerance", float(residuals.max()))
    vectors = vectors / np.sqrt(op.h)
    logger.debug(f"Adiabatic eigenvalues: {values}")
    return Spectrum(eigenvalues=values, residuals=residuals, eigenvectors=vectors)


def harmonic_prediction(x: np.ndarray, lambda0: np.ndarray, eps: float, n_levels: int = 3, half_window: int = 3):
    """(x₀, ω, levels) from a quadratic fit of λ₀ around its minimum:
    e_ℓ = λ₀(x₀) + εω(1 + 2ℓ) with ω² = ½ λ₀''(x₀)."""
    i = int(np.argmin(lambda0))
    lo, hi = max(i - half_window, 0), min(i + half_window + 1, len(x))
    if hi - lo < 3:
        raise GridError("minimum of lambda0 sits on the boundary")
    a, b, c = np.polyfit(x[lo:hi], lambda0[lo:hi], 2)
    if a <= 0:
        raise GridError("lambda0 has no non-degenerate minimum")
    x0 = -b / (2.0 * a)
    bottom = c - b ** 2 / (4.0 * a)
    omega = float(np.sqrt(a))
    levels = bottom + eps * omega * (1.0 + 2.0 * np.arange(n_levels))
    return float(x0), omega, levels
