import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given

from app.errors import DimensionError, SweepRejected
from app.models import FullSpectrum, ProblemKind, Spectrum
from app.services.compare import (
    DEFAULT_EPS,
    check_discretization,
    fit_order,
    leave_one_out,
    pair_and_fit,
    richardson,
    richardson_columns,
    summary_lines,
)


def _spectra(eps, adiabatic_values, full_values):
    adiabatic = [Spectrum(np.atleast_1d(a), np.zeros(np.size(a))) for a in adiabatic_values]
    full = [
        FullSpectrum(ProblemKind.strip, float(e), 0, np.atleast_1d(f), np.zeros(np.size(f)), 0, 0)
        for e, f in zip(eps, full_values)
    ]
    return adiabatic, full


def _cubic_report(eps=DEFAULT_EPS, **kwargs):
    eps = np.asarray(eps)
    adiabatic, full = _spectra(eps, [[1.0 + 0.7 * e ** 3, 2.0 + e ** 3] for e in eps], [[1.0, 2.0]] * len(eps))
    return pair_and_fit(adiabatic, full, eps, **kwargs)


# ------------------ Richardson ------------------
def test_richardson_removes_second_order_error():
    estimate = richardson([1.0 + 0.1 ** 2, 1.0 + 0.05 ** 2], 2)
    assert estimate.value == pytest.approx(1.0, abs=1e-12)
    assert estimate.monotone


def test_richardson_of_a_constant():
    assert richardson([3.5, 3.5, 3.5], 2).value == 3.5


def test_richardson_reports_convergence_ratio():
    h = np.array([0.1, 0.05, 0.025])
    estimate = richardson(1.0 + h ** 2, 2)
    assert estimate.ratio == pytest.approx(4.0)


def test_non_monotone_sequences_are_flagged():
    assert not richardson([1.0, 1.1, 1.05], 2).monotone


def test_richardson_needs_two_levels():
    with pytest.raises(DimensionError):
        richardson([1.0], 2)


def test_richardson_columns_error_estimate():
    h = np.array([0.1, 0.05, 0.025])
    table = np.stack([1.0 + h ** 2 + h ** 4, 2.0 + 3 * h ** 2], -1)
    limits, errors, monotone = richardson_columns(table, 2)
    assert np.allclose(limits, [1.0, 2.0], atol=1e-5)
    assert errors[1] == pytest.approx(0.0, abs=1e-12)
    assert errors[0] > 0
    assert monotone.all()


def test_three_level_error_matches_the_fourth_order_remainder():
    h = np.array([0.1, 0.05, 0.025])
    estimate = richardson(1.0 + h ** 2 + h ** 4, 2)
    assert estimate.error == pytest.approx(abs(estimate.value - 1.0), rel=1e-6)
    assert np.isnan(richardson(1.0 + h[:2] ** 2, 2).error)


def test_richardson_with_a_non_dyadic_ratio():
    h = np.array([0.3, 0.2])
    assert richardson(1.0 + h ** 2, 2, refinement=1.5).value == pytest.approx(1.0, abs=1e-12)


# ------------------ Order fits ------------------
def test_fit_recovers_exact_cubic():
    eps = np.asarray(DEFAULT_EPS)
    slope, residual, used = fit_order(eps, 0.7 * eps ** 3)
    assert slope == pytest.approx(3.0, abs=1e-6)
    assert residual == pytest.approx(0.0, abs=1e-10)
    assert used.all()


def test_fit_with_a_higher_order_tail():
    eps = np.geomspace(0.025, 0.1, 5)
    slope, _, _ = fit_order(eps, eps ** 3 + eps ** 4)
    assert 2.9 < slope < 3.3


@given(st.floats(min_value=0.5, max_value=5.0), st.floats(min_value=1e-2, max_value=1e3))
def test_fit_recovers_any_power_law(power, scale):
    eps = np.asarray(DEFAULT_EPS)
    slope, _, _ = fit_order(eps, scale * eps ** power)
    assert slope == pytest.approx(power, abs=1e-6)


def test_points_below_the_floor_are_excluded():
    eps = np.asarray(DEFAULT_EPS)
    errors = eps ** 3
    errors[-1] = 1e-12
    slope, _, used = fit_order(eps, errors)
    assert not used[-1]
    assert slope == pytest.approx(3.0, abs=1e-6)


def test_leave_one_out_is_stable_on_clean_data():
    eps = np.asarray(DEFAULT_EPS)
    slopes = leave_one_out(eps, 2.0 * eps ** 3)
    assert len(slopes) == len(eps)
    assert np.allclose(slopes, 3.0, atol=1e-6)


# ------------------ Pairing ------------------
def test_pair_and_fit_per_index():
    report = _cubic_report(theory_order=3.0, config_hash="abc")
    assert np.allclose(report.fitted_orders, 3.0, atol=1e-6)
    assert report.passed.all()
    assert report.config_hash == "abc"
    assert report.eps_values[0] == max(DEFAULT_EPS)
    assert report.grid_limits.shape == (2, len(DEFAULT_EPS), 2)


def test_pairing_ignores_input_order():
    eps = np.asarray(DEFAULT_EPS)
    order = np.array([3, 0, 4, 1, 2])
    reference = _cubic_report(eps)
    shuffled = _cubic_report(eps[order])
    assert np.array_equal(reference.paired_errors, shuffled.paired_errors)
    assert np.array_equal(reference.fitted_orders, shuffled.fitted_orders)


def test_pairing_sorts_eigenvalues():
    eps = [0.2, 0.1, 0.05]
    adiabatic, full = _spectra(eps, [[2.0 + e ** 3, 1.0 + e ** 3] for e in eps], [[1.0, 2.0]] * 3)
    report = pair_and_fit(adiabatic, full, eps)
    assert np.allclose(report.paired_errors[:, 0], np.asarray(eps) ** 3)


def test_pairing_rejects_mismatched_inputs():
    adiabatic, full = _spectra([0.2, 0.1], [[1.0], [1.0]], [[1.0], [1.0]])
    with pytest.raises(DimensionError):
        pair_and_fit(adiabatic, full[:1], [0.2, 0.1])
    with pytest.raises(DimensionError):
        pair_and_fit(adiabatic, full, [0.1, 0.1])


def test_floor_exclusion_is_reported():
    eps = np.asarray(DEFAULT_EPS)
    adiabatic, full = _spectra(eps, [1.0 + (e ** 3 if e > 0.06 else 0.0) for e in eps], [1.0] * len(eps))
    report = pair_and_fit(adiabatic, full, eps)
    assert report.excluded[-1, 0]
    assert any("below numerical floor" in w for w in report.warnings)


def test_low_order_fails_the_threshold():
    eps = np.asarray(DEFAULT_EPS)
    adiabatic, full = _spectra(eps, [1.0 + e ** 2 for e in eps], [1.0] * len(eps))
    report = pair_and_fit(adiabatic, full, eps, theory_order=3.0, threshold=2.5)
    assert report.fitted_orders[0] == pytest.approx(2.0, abs=1e-6)
    assert not report.passed[0]


# ------------------ Discretization gate ------------------
def test_discretization_gate():
    report = _cubic_report()
    smallest = report.paired_errors.min(axis=0)
    check_discretization(report, np.tile(0.05 * smallest, (len(DEFAULT_EPS), 1)))
    with pytest.raises(SweepRejected):
        check_discretization(report, np.tile(0.2 * smallest, (len(DEFAULT_EPS), 1)))
    with pytest.raises(DimensionError):
        check_discretization(report, np.zeros(3))


def test_summary_lines():
    lines = summary_lines(_cubic_report())
    assert lines[0] == "0, theory 3, fitted 3.0000, PASS"
    assert len(lines) == 2
