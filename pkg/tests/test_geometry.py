import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given

from app.errors import DimensionError, GridError, SelfIntersectionError
from app.models import CurveKind, CurveSpec, PrincipalCurvatureSet, ProfileKind, TwistKind
from app.services.geometry import (
    density_rho,
    density_rho_general,
    horizontal_correction_d1,
    integrate_parallel_frame,
    inverse_horizontal_metric_d1,
    pullback_metric_d1,
    principal_set_for_sphere,
    reparametrize_arclength,
    sphere_vbend0,
    surface_metric_coeffs,
    twist_profile,
    twisted_curvature,
    twisted_frame,
    vbend0_from_principal_curvatures,
    vbend0_traceless_form,
    vbend_eps_correction,
)
from app.services.profiles import RadiusProfile

finite = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)


def _helix_frame(theta: float = 0.0):
    curve = CurveSpec(CurveKind.helix, 5.0, 100, a=1.0, b=0.5)
    tau0 = np.array([0.0, 1.0, 0.5]) / np.hypot(1.0, 0.5)
    e1, e2 = np.array([-1.0, 0.0, 0.0]), np.cross(tau0, [-1.0, 0.0, 0.0])
    return integrate_parallel_frame(curve, np.cos(theta) * e1 + np.sin(theta) * e2)


# ------------------ Frames ------------------
def test_line_frame_is_constant(line_frame):
    assert np.allclose(line_frame.kappa, 0.0, atol=1e-14)
    assert np.allclose(line_frame.e1, [0.0, 1.0, 0.0])
    assert np.allclose(line_frame.e2, [0.0, 0.0, 1.0])
    assert np.allclose(np.diff(line_frame.nodes), np.pi / 64)


def test_circle_curvature_is_inverse_radius():
    frame = integrate_parallel_frame(CurveSpec(CurveKind.circle, 4.0 * np.pi, 400, radius=2.0), [-1.0, 0.0, 0.0])
    assert np.allclose(frame.kappa[:, 0], 0.5, atol=1e-8)
    assert np.allclose(frame.kappa[:, 1], 0.0, atol=1e-8)
    # the binormal of a planar curve stays put
    assert np.allclose(frame.e2, [0.0, 0.0, 1.0], atol=1e-8)


def test_helix_curvature_norm_and_orthonormality():
    frame = integrate_parallel_frame(CurveSpec(CurveKind.helix, 20.0, 2000, a=3.0, b=4.0), [-1.0, 0.0, 0.0])
    assert np.allclose(np.linalg.norm(frame.kappa, axis=1), 3.0 / 25.0, atol=1e-6)
    F = np.stack([frame.tau, frame.e1, frame.e2], axis=1)
    gram = np.einsum("nij,nkj->nik", F, F)
    assert np.abs(gram - np.eye(3)).max() <= 1e-8


@given(st.floats(min_value=0.0, max_value=2.0 * np.pi))
def test_rotating_initial_normal_rotates_curvature(theta):
    base, rotated = _helix_frame(), _helix_frame(theta)
    k1, k2 = base.kappa[:, 0], base.kappa[:, 1]
    expected = np.stack([np.cos(theta) * k1 + np.sin(theta) * k2, -np.sin(theta) * k1 + np.cos(theta) * k2], -1)
    assert np.allclose(rotated.kappa, expected, atol=1e-8)


def test_initial_normal_must_be_orthogonal():
    with pytest.raises(GridError):
        integrate_parallel_frame(CurveSpec(CurveKind.line, 1.0, 16), [1.0, 0.0, 0.0])


def test_sampled_circle_is_resampled_by_arclength():
    t = np.linspace(0.0, np.pi, 301)
    points = np.stack([2.0 * np.cos(t), 2.0 * np.sin(t), np.zeros_like(t)], -1)
    curve = reparametrize_arclength(CurveSpec(CurveKind.sampled, 0.0, 128, points=points))
    assert curve.length == pytest.approx(2.0 * np.pi, abs=1e-5)
    chords = np.linalg.norm(np.diff(curve.points, axis=0), axis=1)
    h = curve.length / 128
    assert np.allclose(chords, 4.0 * np.sin(h / 4.0), atol=1e-6)
    assert np.allclose(np.linalg.norm(curve.tangent, axis=1), 1.0)

    tau0 = curve.tangent[0]
    e1 = np.array([-1.0, 0.0, 0.0]) + tau0[0] * tau0
    frame = integrate_parallel_frame(curve, e1 / np.linalg.norm(e1))
    assert np.allclose(np.linalg.norm(frame.kappa[5:-5], axis=1), 0.5, atol=1e-3)


def test_repeated_sample_points_are_rejected():
    points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    with pytest.raises(GridError):
        reparametrize_arclength(CurveSpec(CurveKind.sampled, 0.0, 16, points=points))


# ------------------ Densities ------------------
def test_density_examples(unit_circle_frame):
    x = unit_circle_frame.nodes[3]
    assert density_rho(unit_circle_frame, 0.0, x, [0.3, 0.2]) == 1.0
    assert density_rho(unit_circle_frame, 0.1, x, [0.5, 0.0]) == pytest.approx(0.95, abs=1e-8)
    with pytest.raises(SelfIntersectionError):
        density_rho(unit_circle_frame, 0.1, x, [20.0, 0.0])


def test_density_rejects_off_grid_points(unit_circle_frame):
    with pytest.raises(GridError):
        density_rho(unit_circle_frame, 0.1, unit_circle_frame.nodes[3] + 1e-3, [0.0, 0.0])


def test_density_general_examples():
    assert density_rho_general([1.0, 2.0], 0.1) == pytest.approx(0.72)
    assert density_rho_general(PrincipalCurvatureSet([[1.0], [2.0]]), 0.0) == 1.0
    with pytest.raises(SelfIntersectionError):
        density_rho_general(PrincipalCurvatureSet(np.full((3, 1), 0.5)), 2.0)


# ------------------ Metrics ------------------
def test_straight_pullback_metric_is_diagonal(line_frame):
    g = pullback_metric_d1(line_frame, 0.1, line_frame.nodes[10], [0.3, -0.4])
    assert np.allclose(g, np.diag([100.0, 1.0, 1.0]))


def test_curved_pullback_metric(unit_circle_frame):
    g = pullback_metric_d1(unit_circle_frame, 0.1, unit_circle_frame.nodes[7], [0.5, 0.0])
    assert g[0, 0] == pytest.approx(90.25)
    assert np.allclose(g[0, 1:], 0.0)


def test_twisted_pullback_couples_normals(line_frame):
    tw = twist_profile(TwistKind.constant, line_frame.nodes, rate=1.0)
    g = pullback_metric_d1(line_frame, 0.1, line_frame.nodes[5], [0.0, 1.0], tw)
    assert g[0, 1] == pytest.approx(-1.0)
    assert g[0, 2] == pytest.approx(0.0)
    assert g[1, 0] == g[0, 1]


@given(
    st.floats(min_value=-0.5, max_value=0.5),
    st.floats(min_value=-0.5, max_value=0.5),
    st.floats(min_value=-2.0, max_value=2.0),
    st.integers(min_value=0, max_value=256),
)
def test_pullback_determinant_is_density_squared(unit_circle_frame, n1, n2, rate, i):
    eps = 0.1
    frame = unit_circle_frame
    tw = twist_profile(TwistKind.constant, frame.nodes, rate=rate)
    g = pullback_metric_d1(frame, eps, frame.nodes[i], [n1, n2], tw)
    kappa = twisted_curvature(frame, tw)[i]
    rho = 1.0 - eps * (n1 * kappa[0] + n2 * kappa[1])
    assert np.linalg.det(g) == pytest.approx(rho ** 2 / eps ** 2, rel=1e-12)


@given(st.floats(min_value=-0.9, max_value=0.9), st.floats(min_value=-0.9, max_value=0.9))
def test_horizontal_correction_matches_density(unit_circle_frame, n1, n2):
    eps, x = 0.2, unit_circle_frame.nodes[11]
    rho = density_rho(unit_circle_frame, eps, x, [n1, n2])
    h_eps = horizontal_correction_d1(unit_circle_frame, eps, x, [n1, n2])
    assert 1.0 + eps * h_eps == pytest.approx(rho ** 2, rel=1e-12)
    g_xx = pullback_metric_d1(unit_circle_frame, eps, x, [n1, n2])[0, 0]
    assert inverse_horizontal_metric_d1(unit_circle_frame, eps, x, [n1, n2]) * g_xx == pytest.approx(1.0)


# ------------------ Bending potential ------------------
def test_vbend0_examples():
    assert vbend0_from_principal_curvatures(PrincipalCurvatureSet([[2.0]])) == pytest.approx(-1.0)
    assert vbend0_from_principal_curvatures(PrincipalCurvatureSet([[0.5], [0.5]])) == pytest.approx(0.0, abs=1e-15)
    assert sphere_vbend0(1, 2.0) == pytest.approx(-1.0 / 16.0)
    assert sphere_vbend0(3, 1.0) == pytest.approx(0.75)
    assert vbend0_from_principal_curvatures(PrincipalCurvatureSet(np.ones((3, 1)))) == pytest.approx(0.75)


@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_sphere_matches_its_principal_curvatures(d):
    pcs = principal_set_for_sphere(d, 1.5)
    assert vbend0_from_principal_curvatures(pcs) == pytest.approx(sphere_vbend0(d, 1.5))


def test_vbend0_is_non_positive_for_low_dimensions():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        d, k = int(rng.integers(1, 3)), int(rng.integers(1, 4))
        kappas = rng.uniform(-10.0, 10.0, size=(d, k))
        assert vbend0_from_principal_curvatures(PrincipalCurvatureSet(kappas)) <= 1e-12 * max(1.0, np.abs(kappas).max() ** 2)


@given(st.lists(finite, min_size=1, max_size=4), st.lists(finite, min_size=1, max_size=4))
def test_vbend0_traceless_form_agrees(first, second):
    d = min(len(first), len(second))
    pcs = PrincipalCurvatureSet(np.stack([first[:d], second[:d]], -1))
    scale = max(1.0, float(np.abs(pcs.kappas).max()) ** 2)
    assert vbend0_traceless_form(pcs) == pytest.approx(vbend0_from_principal_curvatures(pcs), abs=1e-10 * scale)


def test_vbend_eps_correction_is_linear_and_odd():
    rng = np.random.default_rng(3)
    W = rng.normal(size=(2, 2, 2))
    W = W + np.transpose(W, (0, 2, 1))
    nu1, nu2 = rng.normal(size=2), rng.normal(size=2)
    total = vbend_eps_correction(W, nu1 + nu2)
    assert total == pytest.approx(vbend_eps_correction(W, nu1) + vbend_eps_correction(W, nu2))
    assert vbend_eps_correction(W, nu1) + vbend_eps_correction(W, -nu1) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DimensionError):
        vbend_eps_correction(W, np.ones(3))


# ------------------ Surfaces of revolution ------------------
def test_cylinder_surface_metric():
    surf = RadiusProfile().sample(np.linspace(0.0, 1.0, 11))
    g_xx, g_pp, h_eps = surface_metric_coeffs(surf, 0.1)
    assert np.allclose(g_xx, 1.0)
    assert np.allclose(g_pp, 0.01)
    assert np.allclose(h_eps, 0.0)


def test_exponential_surface_metric():
    surf = RadiusProfile(kind=ProfileKind.exponential).sample(np.array([0.0, 0.5]))
    g_xx, _, h_eps = surface_metric_coeffs(surf, 0.1)
    assert g_xx[0] == pytest.approx(1.01)
    assert np.allclose(h_eps, 0.1 * surf.f_prime ** 2)


# ------------------ Twist ------------------
def test_window_twist_rate_is_derivative_of_angle():
    x = np.linspace(0.0, np.pi, 2001)
    tw = twist_profile(TwistKind.window, x, rate=2.0, window=(1.0, 2.0), smoothing=0.1)
    assert tw.omega[0] == 0.0
    assert np.max(np.abs(np.gradient(tw.omega, x) - tw.omega_prime)) < 1e-3
    assert tw.omega[-1] == pytest.approx(2.0, rel=1e-6)


def test_table_twist_is_differentiated():
    x = np.linspace(0.0, 2.0, 41)
    tw = twist_profile(TwistKind.table, x, table=(x, 0.5 * x ** 2))
    assert np.allclose(tw.omega_prime, x, atol=1e-10)


def test_twisted_frame_stays_orthonormal(unit_circle_frame):
    tw = twist_profile(TwistKind.constant, unit_circle_frame.nodes, rate=1.3)
    f1, f2 = twisted_frame(unit_circle_frame, tw)
    assert np.allclose(np.einsum("ij,ij->i", f1, f2), 0.0, atol=1e-12)
    assert np.allclose(np.linalg.norm(f1, axis=1), 1.0)
    assert np.allclose(np.einsum("ij,ij->i", f1, unit_circle_frame.tau), 0.0, atol=1e-10)
