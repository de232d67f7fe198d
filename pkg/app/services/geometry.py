# app/services/geometry.py
"""Base curves, the relatively parallel frame, densities, pullback metrics and
the closed-form bending potentials."""
import dataclasses
import logging
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from app.errors import DimensionError, GridError, SelfIntersectionError
from app.models import (
    CurveKind,
    CurveSpec,
    ParallelFrame,
    PrincipalCurvatureSet,
    SurfaceOfRevolution,
    TwistKind,
    TwistProfile,
)

logger = logging.getLogger("geometry")

ROTATION_GENERATOR = np.array([[0.0, -1.0], [1.0, 0.0]])
_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)


# ------------------ Arclength ------------------
def reparametrize_arclength(curve: CurveSpec) -> CurveSpec:
    """Resample ``curve`` at N+1 nodes equispaced in arclength.

    Analytic kinds use their closed-form unit-speed parametrisation. Sampled
    curves are interpolated by a cubic spline, measured by Gauss quadrature of
    the speed and inverted by Newton's method; c'' then comes from 4th-order
    differences of the unit tangent.
    """
    if curve.arclength:
        return curve
    if curve.kind == CurveKind.sampled:
        return _resample_spline(curve)

    s = curve.nodes
    points, tangent, accel = _analytic_jet(curve, s)
    speed = np.linalg.norm(tangent, axis=1)
    if np.max(np.abs(speed - 1.0)) > 1e-8:
        raise GridError(f"{curve.kind.value} parametrisation is not unit speed")
    logger.debug(f"Analytic {curve.kind.value} resampled at {len(s)} nodes")
    return dataclasses.replace(curve, points=points, tangent=tangent, accel=accel, arclength=True)


def _analytic_jet(curve: CurveSpec, s: np.ndarray):
    s = np.asarray(s, dtype=float)
    zero, one = np.zeros_like(s), np.ones_like(s)
    if curve.kind == CurveKind.line:
        return np.stack([s, zero, zero], -1), np.stack([one, zero, zero], -1), np.stack([zero] * 3, -1)
    if curve.kind == CurveKind.circle:
        R = curve.radius
        c, sn = np.cos(s / R), np.sin(s / R)
        return (
            np.stack([R * c, R * sn, zero], -1),
            np.stack([-sn, c, zero], -1),
            np.stack([-c / R, -sn / R, zero], -1),
        )
    a, b = curve.a, curve.b
    norm = np.hypot(a, b)
    c, sn = np.cos(s / norm), np.sin(s / norm)
    return (
        np.stack([a * c, a * sn, b * s / norm], -1),
        np.stack([-a * sn / norm, a * c / norm, b / norm * one], -1),
        np.stack([-a * c / norm ** 2, -a * sn / norm ** 2, zero], -1),
    )


def _resample_spline(curve: CurveSpec) -> CurveSpec:
    raw = np.asarray(curve.points, dtype=float)
    chords = np.linalg.norm(np.diff(raw, axis=0), axis=1)
    if np.any(chords <= 1e-12 * max(chords.sum(), 1.0)):
        bad = int(np.argmin(chords))
        raise GridError(f"degenerate curve: repeated points at sample {bad}")
    t_knots = np.concatenate([[0.0], np.cumsum(chords)])
    spline = CubicSpline(t_knots, raw, axis=0)
    velocity = spline.derivative(1)

    def speed(t):
        return np.linalg.norm(velocity(t), axis=-1)

    # Arclength at the knots, Gauss-Legendre per segment.
    mid, half = 0.5 * (t_knots[1:] + t_knots[:-1]), 0.5 * np.diff(t_knots)
    seg = (speed(mid[:, None] + half[:, None] * _GAUSS_NODES) * _GAUSS_WEIGHTS).sum(1) * half
    if np.any(seg <= 0.0):
        raise GridError("degenerate curve: zero speed segment")
    s_knots = np.concatenate([[0.0], np.cumsum(seg)])
    length = float(s_knots[-1])

    def arclength(t):
        j = np.clip(np.searchsorted(t_knots, t, side="right") - 1, 0, len(seg) - 1)
        lo = t_knots[j]
        mid_t, half_t = 0.5 * (t + lo), 0.5 * (t - lo)
        partial = (speed(mid_t[:, None] + half_t[:, None] * _GAUSS_NODES) * _GAUSS_WEIGHTS).sum(1) * half_t
        return s_knots[j] + partial

    targets = np.linspace(0.0, length, curve.n_samples + 1)
    t = np.interp(targets, s_knots, t_knots)
    for _ in range(50):
        v = speed(t)
        if np.any(v < 1e-12):
            raise GridError("degenerate curve: zero speed")
        step = (arclength(t) - targets) / v
        t = np.clip(t - step, t_knots[0], t_knots[-1])
        if np.max(np.abs(step)) < 1e-13 * length:
            break
    else:
        raise GridError("arclength inversion did not converge")

    h = length / curve.n_samples
    tangent = velocity(t) / speed(t)[:, None]
    accel = fourth_order_derivative(tangent, h)
    logger.info(f"✅ Sampled curve resampled: L={length:.10g}, N={curve.n_samples}")
    return dataclasses.replace(
        curve, length=length, points=spline(t), tangent=tangent, accel=accel, arclength=True
    )


def fourth_order_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """First derivative along axis 0, 4th order; one-sided stencils at the ends."""
    y = np.asarray(values, dtype=float)
    if len(y) < 5:
        raise GridError("need at least 5 nodes for 4th-order differences")
    out = np.empty_like(y)
    out[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    out[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / (12 * h)
    out[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * h)
    out[-1] = (25 * y[-1] - 48 * y[-2] + 36 * y[-3] - 16 * y[-4] + 3 * y[-5]) / (12 * h)
    out[-2] = (3 * y[-1] + 10 * y[-2] - 18 * y[-3] + 6 * y[-4] - y[-5]) / (12 * h)
    return out


def _acceleration(curve: CurveSpec) -> Callable[[float], np.ndarray]:
    if curve.kind == CurveKind.sampled:
        spline = CubicSpline(curve.nodes, curve.accel, axis=0)
        return lambda x: spline(x)
    return lambda x: _analytic_jet(curve, np.array([x]))[2][0]


# ------------------ Parallel frame ------------------
def integrate_parallel_frame(curve: CurveSpec, e1_init) -> ParallelFrame:
    """RK4 integration of τ' = κ^α e_α, e_α' = −κ^α τ with κ^α = ⟨c'', e_α⟩,
    re-orthonormalised by Gram-Schmidt after every step."""
    curve = reparametrize_arclength(curve)
    accel = _acceleration(curve)
    tau0 = curve.tangent[0]
    e1 = np.asarray(e1_init, dtype=float)
    if abs(e1 @ tau0) > 1e-10:
        raise GridError(f"e1_init not orthogonal to the initial tangent: <e1, tau> = {e1 @ tau0:.3e}")
    e1 = e1 / np.linalg.norm(e1)
    frame = np.array([tau0, e1, np.cross(tau0, e1)])

    def rhs(x, F):
        a = accel(x)
        k1, k2 = a @ F[1], a @ F[2]
        return np.array([k1 * F[1] + k2 * F[2], -k1 * F[0], -k2 * F[0]])

    nodes, h = curve.nodes, curve.step
    frames = np.empty((len(nodes), 3, 3))
    frames[0] = frame
    for i, x in enumerate(nodes[:-1]):
        s1 = rhs(x, frame)
        s2 = rhs(x + h / 2, frame + h / 2 * s1)
        s3 = rhs(x + h / 2, frame + h / 2 * s2)
        s4 = rhs(x + h, frame + h * s3)
        frame = _gram_schmidt(frame + h / 6 * (s1 + 2 * s2 + 2 * s3 + s4))
        frames[i + 1] = frame

    tau, e1s, e2s = frames[:, 0], frames[:, 1], frames[:, 2]
    kappa = np.stack([np.einsum("ij,ij->i", curve.accel, e1s), np.einsum("ij,ij->i", curve.accel, e2s)], -1)
    gram = np.einsum("nij,nkj->nik", frames, frames) - np.eye(3)
    logger.info(f"✅ Parallel frame integrated over {len(nodes)} nodes, max Gram deviation {np.abs(gram).max():.2e}")
    return ParallelFrame(nodes, tau, e1s, e2s, kappa, h, curve.accel, curve.points)


def _gram_schmidt(F: np.ndarray) -> np.ndarray:
    tau = F[0] / np.linalg.norm(F[0])
    e1 = F[1] - (F[1] @ tau) * tau
    e1 /= np.linalg.norm(e1)
    e2 = F[2] - (F[2] @ tau) * tau - (F[2] @ e1) * e1
    e2 /= np.linalg.norm(e2)
    return np.array([tau, e1, e2])


def twisted_frame(frame: ParallelFrame, twist: TwistProfile) -> tuple[np.ndarray, np.ndarray]:
    """Normals rotated by ω(x): f₁ = cos ω e₁ + sin ω e₂, f₂ = −sin ω e₁ + cos ω e₂."""
    c, s = np.cos(twist.omega)[:, None], np.sin(twist.omega)[:, None]
    return c * frame.e1 + s * frame.e2, -s * frame.e1 + c * frame.e2


def twisted_curvature(frame: ParallelFrame, twist: TwistProfile | None) -> np.ndarray:
    """Curvature components in the (possibly twisted) frame."""
    if twist is None:
        return frame.kappa
    c, s = np.cos(twist.omega), np.sin(twist.omega)
    k1, k2 = frame.kappa[:, 0], frame.kappa[:, 1]
    return np.stack([c * k1 + s * k2, -s * k1 + c * k2], -1)


# ------------------ Densities and metrics ------------------
def density_rho(frame: ParallelFrame, eps: float, x: float, n) -> float:
    i = frame.index(x)
    rho = 1.0 - eps * float(np.dot(n, frame.kappa[i]))
    if rho <= 0.0:
        raise SelfIntersectionError(f"tube self-intersection at eps={eps}, x={x}: rho={rho:.6g}")
    return rho


def density_on_fibre(kappa: np.ndarray, eps: float, n1: np.ndarray, n2: np.ndarray) -> np.ndarray:
    """ρ_ε = 1 − ε n·κ for one base node over a whole fibre grid."""
    rho = 1.0 - eps * (n1 * kappa[0] + n2 * kappa[1])
    if np.any(rho <= 0.0):
        raise SelfIntersectionError(f"tube self-intersection at eps={eps}: min rho={rho.min():.6g}")
    return rho


def density_rho_general(w_spectrum, eps: float) -> float:
    """det(id − ε W(ν)) from the principal curvatures of W(ν)."""
    if isinstance(w_spectrum, PrincipalCurvatureSet):
        if w_spectrum.k != 1:
            raise DimensionError(f"expected curvatures of a single normal direction, got k={w_spectrum.k}")
        w_spectrum = w_spectrum.kappas[:, 0]
    rho = float(np.prod(1.0 - eps * np.asarray(w_spectrum, dtype=float)))
    if rho <= 0.0:
        raise SelfIntersectionError(f"self-intersection at eps={eps}: det(id - eps W) = {rho:.6g}")
    return rho


def pullback_metric_d1(frame: ParallelFrame, eps: float, x: float, n, twist: TwistProfile | None = None) -> np.ndarray:
    """Scaled pullback metric in bundle coordinates (x, n¹, n²)."""
    i = frame.index(x)
    n = np.asarray(n, dtype=float)
    kappa = twisted_curvature(frame, twist)[i]
    rho = 1.0 - eps * float(n @ kappa)
    if rho <= 0.0:
        raise SelfIntersectionError(f"tube self-intersection at eps={eps}, x={x}: rho={rho:.6g}")
    w = 0.0 if twist is None else float(twist.omega_prime[i])
    g = np.eye(3)
    g[0, 0] = rho ** 2 / eps ** 2 + w ** 2 * float(n @ n)
    g[0, 1:] = g[1:, 0] = w * (ROTATION_GENERATOR @ n)
    return g


def horizontal_correction_d1(frame: ParallelFrame, eps: float, x: float, n) -> float:
    """h^ε(∂_x, ∂_x) with g_xx = ε⁻²(1 + ε h^ε)."""
    nk = float(np.dot(n, frame.kappa[frame.index(x)]))
    return -2.0 * nk + eps * nk ** 2


def inverse_horizontal_metric_d1(frame: ParallelFrame, eps: float, x: float, n) -> float:
    return eps ** 2 / density_rho(frame, eps, x, n) ** 2


# ------------------ Bending potential ------------------
def vbend0_from_principal_curvatures(pcs: PrincipalCurvatureSet) -> float:
    H = pcs.kappas.sum(axis=0)
    squares = (pcs.kappas ** 2).sum(axis=0)
    return 0.25 * float(np.sum(H ** 2 - 2.0 * squares))


def vbend0_traceless_form(pcs: PrincipalCurvatureSet) -> float:
    """Same value written with the mean curvatures H_α and the traceless W₀."""
    d = pcs.d
    H = pcs.kappas.sum(axis=0)
    traceless = ((pcs.kappas - H / d) ** 2).sum(axis=0)
    return 0.25 * float(np.sum((1.0 - 2.0 / d) * H ** 2 - 2.0 * traceless))


def sphere_vbend0(d: int, R: float) -> float:
    if d < 1 or R <= 0:
        raise DimensionError(f"sphere needs d >= 1 and R > 0, got d={d}, R={R}")
    return (1.0 - 2.0 / d) * d ** 2 / (4.0 * R ** 2)


def vbend_eps_correction(weingarten: np.ndarray, nu, lap_trace: float = 0.0) -> float:
    """First-order bending term (coefficient of ε) at fibre point ν.

    ``weingarten[alpha]`` is the d×d matrix W(e_α); ``lap_trace`` is
    Δ_H tr W(ν) supplied by the caller.
    """
    W = np.asarray(weingarten, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if W.ndim != 3 or W.shape[0] != nu.shape[0] or W.shape[1] != W.shape[2]:
        raise DimensionError(f"weingarten shape {W.shape} does not match normal vector {nu.shape}")
    Wn = np.einsum("a,aij->ij", nu, W)
    total = sum(np.trace(Wa) * np.trace(Wa @ Wn) - 2.0 * np.trace(Wa @ Wa @ Wn) for Wa in W)
    return 0.5 * (float(total) - lap_trace)


# ------------------ Surfaces of revolution ------------------
def surface_metric_coeffs(surf: SurfaceOfRevolution, eps: float):
    """Induced metric of the surface of radius ε f(x) about a straight axis.

    Returns (g_xx, g_φφ, h^ε) per node.
    """
    g_xx = 1.0 + eps ** 2 * surf.f_prime ** 2
    g_pp = eps ** 2 * surf.f ** 2
    h_eps = hollow_horizontal_correction(surf.f, surf.f_prime, np.zeros_like(surf.f), eps)
    return g_xx, g_pp, h_eps


def hollow_horizontal_correction(r, r_x, r_phi, eps: float):
    """h^ε(∂_x^H, ∂_x^H) = ε r² r_x² / (r_φ² + r²) for a tube boundary of radius r(x, φ)."""
    r, r_x, r_phi = (np.asarray(v, dtype=float) for v in (r, r_x, r_phi))
    return eps * r ** 2 * r_x ** 2 / (r_phi ** 2 + r ** 2)


def principal_set_for_sphere(d: int, R: float) -> PrincipalCurvatureSet:
    return PrincipalCurvatureSet(np.full((d, 1), 1.0 / R))


# ------------------ Twist ------------------
def twist_profile(
    kind: TwistKind,
    nodes: np.ndarray,
    rate: float = 0.0,
    window: tuple[float, float] | None = None,
    smoothing: float = 0.1,
    table: tuple[np.ndarray, np.ndarray] | None = None,
) -> TwistProfile:
    """Angle function ω and its rate ω' on ``nodes``.

    ``window`` twists at ``rate`` between its ends with tanh ramps of width
    ``smoothing``; ``table`` is a sampled (x, ω) pair differentiated by
    central differences.
    """
    x = np.asarray(nodes, dtype=float)
    if kind == TwistKind.none:
        return TwistProfile.untwisted(x)
    if kind == TwistKind.constant:
        return TwistProfile(x, rate * (x - x[0]), np.full_like(x, rate))
    if kind == TwistKind.window:
        if window is None:
            raise GridError("window twist needs (x_start, x_end)")
        lo, hi = (x - window[0]) / smoothing, (x - window[1]) / smoothing
        omega_prime = 0.5 * rate * (np.tanh(lo) - np.tanh(hi))
        omega = 0.5 * rate * smoothing * (np.logaddexp(lo, -lo) - np.logaddexp(hi, -hi))
        return TwistProfile(x, omega - omega[0], omega_prime)
    if table is None:
        raise GridError("table twist needs sampled (x, omega) columns")
    omega = np.interp(x, table[0], table[1])
    return TwistProfile(x, omega, np.gradient(omega, x, edge_order=2))
