# app/services/reference.py
"""Direct discretizations of the full operator −ε²Δ on thin domains, used as
reference spectra for the adiabatic operator."""
import logging

import numpy as np
from scipy import sparse

from app.errors import ConvergenceError, DimensionError, GridError
from app.models import CrossSectionShape, FullProblem, FullSpectrum, ProblemKind, ShapeKind, TwistProfile
from app.services.cross_section import angular_operator, fibre_grid, polar_disc_operators
from app.services.linalg import (
    forward_difference,
    lowest_eigenpairs,
    masked_laplacian,
    midpoint_average,
    symmetrize,
    tridiagonal_eigenpairs,
    weighted_similarity,
)
from app.services.profiles import RadiusProfile, base_grid

logger = logging.getLogger("reference")

RESIDUAL_TOL = 1e-7
MAX_UNKNOWNS = 2_000_000

_GAUSS = 0.5 * (1.0 + np.array([-1.0, 1.0]) / np.sqrt(3.0))


# ------------------ Bilinear elements ------------------
def _q1_basis(xi: float, eta: float):
    N = np.array([(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta])
    dxi = np.array([-(1 - eta), 1 - eta, -eta, eta])
    deta = np.array([-(1 - xi), -xi, 1 - xi, xi])
    return N, dxi, deta


def assemble_q1(x_nodes: np.ndarray, s_nodes: np.ndarray, coefficients):
    """Stiffness and row-sum lumped mass of the quadratic form

        ∫∫ a_xx u_x² + 2 a_xs u_x u_s + a_ss u_s² + c u²   against   ∫∫ w u²

    on the tensor grid, 2x2 Gauss points per element. ``coefficients(X, S)``
    returns (a_xx, a_xs, a_ss, c, w) at the quadrature points.
    """
    nx_all, ns_all = len(x_nodes), len(s_nodes)
    hx, hs = np.diff(x_nodes)[:, None], np.diff(s_nodes)[None, :]
    area = hx * hs
    K_local = np.zeros((nx_all - 1, ns_all - 1, 4, 4))
    M_local = np.zeros((nx_all - 1, ns_all - 1, 4))
    for gx in _GAUSS:
        for gs in _GAUSS:
            X = x_nodes[:-1, None] + gx * hx
            S = s_nodes[None, :-1] + gs * hs
            shape = np.broadcast_shapes(X.shape, S.shape)
            a_xx, a_xs, a_ss, c, w = (np.broadcast_to(np.asarray(v, dtype=float), shape) for v in coefficients(X, S))
            N, dxi, deta = _q1_basis(gx, gs)
            Nx = dxi[None, None, :] / hx[..., None]
            Ns = deta[None, None, :] / hs[..., None]
            weight = 0.25 * area
            K_local += weight[..., None, None] * (
                a_xx[..., None, None] * Nx[..., :, None] * Nx[..., None, :]
                + a_xs[..., None, None] * (Nx[..., :, None] * Ns[..., None, :] + Ns[..., :, None] * Nx[..., None, :])
                + a_ss[..., None, None] * Ns[..., :, None] * Ns[..., None, :]
                + c[..., None, None] * np.outer(N, N)
            )
            M_local += (weight * w)[..., None] * N
    i, j = np.meshgrid(np.arange(nx_all - 1), np.arange(ns_all - 1), indexing="ij")
    corners = np.stack([i * ns_all + j, (i + 1) * ns_all + j, i * ns_all + j + 1, (i + 1) * ns_all + j + 1], -1)
    rows = np.broadcast_to(corners[..., :, None], K_local.shape).ravel()
    cols = np.broadcast_to(corners[..., None, :], K_local.shape).ravel()
    n = nx_all * ns_all
    K = sparse.coo_matrix((K_local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = np.bincount(corners.ravel(), weights=M_local.ravel(), minlength=n)
    return K, M


def _restricted_solve(K, M, free: np.ndarray, n_eigs: int):
    idx = np.flatnonzero(free.ravel())
    S = weighted_similarity(symmetrize(K[idx][:, idx]), M[idx])
    return lowest_eigenpairs(S, n_eigs)


def _spectrum(kind, eps, m, values, residuals, nx, nn) -> FullSpectrum:
    if np.any(residuals > RESIDUAL_TOL):
        logger.error(f"❌ {kind.value} residual {residuals.max():.3e} above tolerance")
        raise ConvergenceError(f"{kind.value} eigenpairs above residual tolerance", float(residuals.max()))
    if np.any(values < -1e-8):
        logger.warning(f"⚠️ {kind.value} spectrum has negative values {values[values < 0]}")
    logger.info(f"✅ {kind.value} eps={eps} m={m}: nu0={values[0]:.12g} (Nx={nx}, Nn={nn})")
    return FullSpectrum(kind, eps, m, np.asarray(values), np.asarray(residuals), nx, nn)


def _check_slope(profile: RadiusProfile, eps: float, x: np.ndarray):
    slope = np.max(np.abs(eps * profile.jet(x)[1]))
    if slope >= 1.0:
        raise GridError(f"profile too rough for the mapped grid: max |eps f'| = {slope:.3g}")


# ------------------ Mapped 2D problems ------------------
def solve_strip(
    profile: RadiusProfile, eps: float, nx: int, ns: int, domain=(0.0, np.pi), n_eigs: int = 3
) -> FullSpectrum:
    """Planar strip {|y| ≤ ε f(x)} mapped to s = y/(ε f) ∈ [−1, 1]."""
    x = base_grid(domain, nx)
    s = np.linspace(-1.0, 1.0, ns + 2)
    _check_slope(profile, eps, x)

    def coefficients(X, S):
        f, fp, _ = profile.jet(X)
        return eps ** 2 * f, -eps ** 2 * S * fp, eps ** 2 * S ** 2 * fp ** 2 / f + 1.0 / f, 0.0 * X, f

    K, M = assemble_q1(x, s, coefficients)
    free = np.zeros((len(x), len(s)), dtype=bool)
    free[1:-1, 1:-1] = True
    values, _, residuals = _restricted_solve(K, M, free, n_eigs)
    return _spectrum(ProblemKind.strip, eps, 0, values, residuals, nx, ns)


def solve_axisym_tube(
    profile: RadiusProfile, eps: float, m: int, nx: int, nr: int, domain=(0.0, np.pi), n_eigs: int = 3
) -> FullSpectrum:
    """Tube of radius ε f(x), angular mode m, mapped to ρ = r/(ε f) ∈ [0, 1].

    The axis row is free (natural condition) for m = 0 and Dirichlet otherwise.
    """
    if m < 0:
        raise DimensionError(f"angular mode must be non-negative, got {m}")
    x = base_grid(domain, nx)
    rho = np.linspace(0.0, 1.0, nr + 2)
    _check_slope(profile, eps, x)

    def coefficients(X, R):
        f, fp, _ = profile.jet(X)
        return (
            eps ** 2 * f ** 2 * R,
            -eps ** 2 * R ** 2 * f * fp,
            eps ** 2 * R ** 3 * fp ** 2 + R,
            m ** 2 / R,
            f ** 2 * R,
        )

    K, M = assemble_q1(x, rho, coefficients)
    free = np.zeros((len(x), len(rho)), dtype=bool)
    free[1:-1, :-1] = True
    if m > 0:
        free[:, 0] = False
    values, _, residuals = _restricted_solve(K, M, free, n_eigs)
    return _spectrum(ProblemKind.axisym_tube, eps, m, values, residuals, nx, nr)


# ------------------ Twisted tube ------------------
def _cartesian_fibre(shape: CrossSectionShape, nn: int):
    """(−Δ_n, L, unit weights) on the masked Cartesian fibre grid."""
    axes, mask, h = fibre_grid(shape, nn)
    laplacian = masked_laplacian(mask, h)
    return laplacian, angular_operator(axes, mask, h), np.ones(laplacian.shape[0])


def solve_twisted_tube(
    shape: CrossSectionShape,
    omega: TwistProfile,
    eps: float,
    nx: int,
    nn: int,
    domain=(0.0, np.pi),
    n_eigs: int = 1,
    max_unknowns: int = MAX_UNKNOWNS,
) -> FullSpectrum:
    """−ε²(∂_x + ω'L)² − Δ_n on [x₀, x₁] × F with Dirichlet boundary.

    Disc fibres use a polar fibre grid on which L commutes exactly with the
    discrete fibre Laplacian; other shapes use the masked Cartesian grid.
    """
    if shape.dim != 2:
        raise DimensionError("twisted tubes need a planar cross-section")
    if nx * nn ** 2 > max_unknowns:
        raise GridError(f"Nx*Nn^2 = {nx * nn ** 2} exceeds the cap of {max_unknowns} unknowns")
    x = base_grid(domain, nx)
    if len(omega.omega_prime) != len(x):
        raise DimensionError(f"twist has {len(omega.omega_prime)} nodes, base grid has {len(x)}")
    hx = float(x[1] - x[0])
    polar = shape.kind == ShapeKind.disc and tuple(shape.center) == (0.0, 0.0)
    stiffness, L, weights = polar_disc_operators(shape.radius, nn) if polar else _cartesian_fibre(shape, nn)
    n_fibre = stiffness.shape[0]

    w_mid = 0.5 * (omega.omega_prime[1:] + omega.omega_prime[:-1])
    G = sparse.kron(forward_difference(nx, hx), sparse.eye(n_fibre)) + sparse.kron(
        sparse.diags(w_mid) @ midpoint_average(nx), L
    )
    W = sparse.diags(np.tile(weights, nx + 1))
    K = eps ** 2 * (G.T @ W @ G) + sparse.kron(sparse.eye(nx), stiffness)
    logger.debug(f"Twisted tube system: {K.shape[0]} unknowns ({'polar' if polar else 'cartesian'} fibre)")
    S = weighted_similarity(symmetrize(K), np.tile(weights, nx))
    values, _, residuals = lowest_eigenpairs(S, n_eigs)
    return _spectrum(ProblemKind.twisted_tube, eps, 0, values, residuals, nx, nn)


# ------------------ Hollow surface ------------------
def solve_hollow_surface(
    profile: RadiusProfile, eps: float, m: int, nx: int, domain=(0.0, np.pi), n_eigs: int = 3
) -> FullSpectrum:
    """Angular mode m of −ε²Δ on the surface of radius ε f(x):
    −ε²(fA)⁻¹ d/dx[(f/A) d/dx] + m²/f², A = √(1 + ε²f'²), weight fA."""
    x = base_grid(domain, nx)
    h = float(x[1] - x[0])
    f, fp, _ = profile.jet(x)
    f_mid, fp_mid, _ = profile.jet(0.5 * (x[1:] + x[:-1]))
    p = f_mid / np.sqrt(1.0 + eps ** 2 * fp_mid ** 2)
    W = (f * np.sqrt(1.0 + eps ** 2 * fp ** 2))[1:-1]
    diagonal = eps ** 2 * (p[:-1] + p[1:]) / h ** 2 + W * m ** 2 / f[1:-1] ** 2
    off = -eps ** 2 * p[1:-1] / h ** 2
    scale = 1.0 / np.sqrt(W)
    values, _, residuals = tridiagonal_eigenpairs(diagonal * scale ** 2, off * scale[:-1] * scale[1:], n_eigs)
    return _spectrum(ProblemKind.hollow_surface, eps, m, values, residuals, nx, 1)


def solve_full(problem: FullProblem) -> FullSpectrum:
    if problem.kind == ProblemKind.strip:
        return solve_strip(problem.profile, problem.eps, problem.nx, problem.nn, problem.domain, problem.n_eigs)
    if problem.kind == ProblemKind.axisym_tube:
        return solve_axisym_tube(
            problem.profile, problem.eps, problem.m, problem.nx, problem.nn, problem.domain, problem.n_eigs
        )
    if problem.kind == ProblemKind.hollow_surface:
        return solve_hollow_surface(problem.profile, problem.eps, problem.m, problem.nx, problem.domain, problem.n_eigs)
    twist = problem.twist or TwistProfile.untwisted(base_grid(problem.domain, problem.nx))
    return solve_twisted_tube(
        problem.shape, twist, problem.eps, problem.nx, problem.nn, problem.domain, problem.n_eigs, problem.max_unknowns
    )
