import os

import hypothesis
import numpy as np
import pytest

from app.models import CrossSectionShape, CurveKind, CurveSpec, ShapeKind
from app.services import reference
from app.services.cross_section import solve_ground_mode
from app.services.geometry import integrate_parallel_frame

np.seterr(all="warn")

hypothesis.settings.register_profile("default", deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session", autouse=True)
def full_spectra_are_positive():
    """Every reference spectrum solved by any test must be strictly positive."""
    spectrum = reference._spectrum

    def _positive(kind, eps, m, values, residuals, nx, nn):
        assert np.all(np.asarray(values) > 0.0), f"{kind.value} spectrum has non-positive values {values}"
        return spectrum(kind, eps, m, values, residuals, nx, nn)

    with pytest.MonkeyPatch.context() as patch:
        patch.setattr(reference, "_spectrum", _positive)
        yield


@pytest.fixture(scope="session")
def interval_mode():
    return solve_ground_mode(CrossSectionShape(ShapeKind.interval, halfwidth=1.0), 400)


@pytest.fixture(scope="session")
def disc_mode():
    return solve_ground_mode(CrossSectionShape(ShapeKind.disc, radius=1.0), 64)


@pytest.fixture(scope="session")
def ellipse_mode():
    return solve_ground_mode(CrossSectionShape(ShapeKind.ellipse, a=1.0, b=0.5), 64)


@pytest.fixture(scope="session")
def unit_circle_frame():
    """Full circle of radius 1 whose frame has κ = (1, 0)."""
    curve = CurveSpec(CurveKind.circle, 2.0 * np.pi, 256, radius=1.0)
    return integrate_parallel_frame(curve, [-1.0, 0.0, 0.0])


@pytest.fixture(scope="session")
def line_frame():
    return integrate_parallel_frame(CurveSpec(CurveKind.line, np.pi, 64), [0.0, 1.0, 0.0])


@pytest.fixture
def write_config(tmp_path):
    """Write a flat key = value file and return its path."""

    def _write(text: str, name: str = "run.cfg"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return _write
