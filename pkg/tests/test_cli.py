import numpy as np
import pytest

from app.main import main
from app.routes import selftest as selftest_route
from app.services.cross_section import bessel_zero
from app.services.pipeline import CheckResult
from app.storage import read_csv

J = np.arange(1, 4)


def _run(command, config_path, out_dir, *extra):
    argv = [command, "--out", str(out_dir), *extra]
    if config_path is not None:
        argv += ["--config", config_path]
    return main(argv)


def _fitted_order(out_dir, index=0):
    summary = (out_dir / "sweep_summary.txt").read_text(encoding="utf-8").splitlines()
    line = next(s for s in summary if s.startswith(f"{index}, theory"))
    return float(line.split("fitted ")[1].split(",")[0])


# ------------------ frame ------------------
def test_frame_of_a_circle(tmp_path, write_config):
    path = write_config("curve.kind = circle\ncurve.R = 2\n")
    assert _run("frame", path, tmp_path / "a") == 0
    text = (tmp_path / "a" / "frame.csv").read_text(encoding="utf-8")
    assert text.startswith("# config_hash=")
    _, table = read_csv(tmp_path / "a" / "frame.csv")
    kappa = np.hypot(table["kappa1"], table["kappa2"])
    assert np.allclose(kappa[5:-5], 0.5, atol=1e-3)


def test_frame_output_is_reproducible(tmp_path, write_config):
    path = write_config("curve.kind = helix\ncurve.a = 1\ncurve.b = 0.5\ntwist.profile = constant\n"
                        "twist.rate = 1\nfiber.shape = ellipse\nfiber.a = 1\nfiber.b = 0.5\n")
    assert _run("frame", path, tmp_path / "a") == 0
    assert _run("frame", path, tmp_path / "b") == 0
    first = (tmp_path / "a" / "frame.csv").read_bytes()
    assert first == (tmp_path / "b" / "frame.csv").read_bytes()
    _, table = read_csv(tmp_path / "a" / "frame.csv")
    assert "f1_1" in table and "omega" in table


def test_default_frame_is_straight(tmp_path):
    assert _run("frame", None, tmp_path) == 0
    _, table = read_csv(tmp_path / "frame.csv")
    assert np.allclose(table["kappa1"], 0.0, atol=1e-12)
    assert np.allclose(table["kappa2"], 0.0, atol=1e-12)
    assert table["x"][-1] == pytest.approx(np.pi)


def test_invalid_config_exits_with_3(tmp_path, write_config, capsys):
    path = write_config("curve.kind = line\nfiber.colour = red\n")
    assert _run("frame", path, tmp_path) == 3
    assert "line 2" in capsys.readouterr().err
    assert not (tmp_path / "frame.csv").exists()


def test_missing_config_exits_with_3(tmp_path):
    assert _run("frame", str(tmp_path / "nope.cfg"), tmp_path) == 3


# ------------------ mode ------------------
def test_disc_mode(tmp_path, write_config):
    path = write_config("fiber.shape = disc\nfiber.n_grid = 64\n")
    assert _run("mode", path, tmp_path) == 0
    meta, table = read_csv(tmp_path / "mode.csv")
    assert float(meta["lambda0"]) == pytest.approx(bessel_zero(0) ** 2, rel=1e-12)
    assert float(meta["L_norm_sq"]) <= 1e-4
    assert set(table) == {"n1", "n2", "phi0"}
    assert np.all(table["n1"] ** 2 + table["n2"] ** 2 < 1.0)


# ------------------ spectrum ------------------
def test_straight_strip_spectrum(tmp_path, write_config):
    eps = 0.1
    path = write_config(f"spectrum.eps = {eps}\nspectrum.nx = 200\nspectrum.nn = 63\nspectrum.n_eigs = 3\n")
    assert _run("spectrum", path, tmp_path) == 0
    expected = np.pi ** 2 / 4 + eps ** 2 * J ** 2
    _, adiabatic = read_csv(tmp_path / "adiabatic_spectrum.csv")
    _, full = read_csv(tmp_path / "full_spectrum.csv")
    assert np.allclose(adiabatic["eigenvalue"], expected, atol=5e-4)
    assert np.allclose(full["eigenvalue"], expected, rtol=1e-3)
    assert full["kind"].tolist() == ["strip"] * 3
    assert np.all(full["Nx"] == 200)


def test_hollow_cylinder_spectrum(tmp_path, write_config):
    eps = 0.1
    path = write_config(f"fiber.shape = disc\nhollow = true\nspectrum.eps = {eps}\nspectrum.nx = 1000\n")
    assert _run("spectrum", path, tmp_path) == 0
    _, adiabatic = read_csv(tmp_path / "adiabatic_spectrum.csv")
    _, full = read_csv(tmp_path / "full_spectrum.csv")
    assert np.allclose(adiabatic["eigenvalue"], eps ** 2 * J ** 2, rtol=1e-4)
    assert np.allclose(full["eigenvalue"], eps ** 2 * J ** 2, rtol=1e-4)


def test_hollow_constriction_potential(tmp_path, write_config):
    eps = 0.1
    path = write_config(
        f"fiber.shape = disc\nfiber.profile = constriction\nhollow = true\nspectrum.eps = {eps}\nspectrum.nx = 401\n"
    )
    assert _run("spectrum", path, tmp_path) == 0
    meta, potentials = read_csv(tmp_path / "potentials.csv")
    assert meta["kind"] == "hollow_surface"
    centre = len(potentials["x"]) // 2
    assert potentials["x"][centre] == pytest.approx(np.pi / 2)
    assert potentials["v_hollow"][centre] == pytest.approx(eps ** 2, rel=2e-3)


def test_curved_guide_skips_the_reference(tmp_path, write_config):
    path = write_config("curve.kind = circle\ncurve.R = 2\nfiber.n_grid = 64\nspectrum.nx = 200\n")
    assert _run("spectrum", path, tmp_path) == 0
    assert (tmp_path / "adiabatic_spectrum.csv").exists()
    assert not (tmp_path / "full_spectrum.csv").exists()


# ------------------ selftest ------------------
def test_failed_check_exits_with_2(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(selftest_route, "run_selftest", lambda threads: [CheckResult("broken", 1.0, 2.0, 1e-3)])
    assert _run("selftest", None, tmp_path) == 2
    assert "broken" in capsys.readouterr().err
    _, table = read_csv(tmp_path / "selftest.csv")
    assert table["passed"].tolist() == [0.0]


@pytest.mark.slow
def test_selftest_passes(tmp_path):
    assert _run("selftest", None, tmp_path) == 0
    _, table = read_csv(tmp_path / "selftest.csv")
    assert np.all(table["passed"] == 1.0)


# ------------------ sweep ------------------
def test_coarse_sweep_is_rejected(tmp_path, write_config, capsys):
    path = write_config(
        "fiber.profile = bump\nfiber.n_grid = 64\nspectrum.n_eigs = 1\nsweep.nx = 3\nsweep.nn = 4\nsweep.levels = 2\n"
    )
    assert _run("sweep", path, tmp_path) == 4
    assert "discretization error" in capsys.readouterr().err
    lines = (tmp_path / "sweep_rejected.txt").read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1].startswith("# rejected: index 0: discretization error")
    assert not (tmp_path / "sweep_report.csv").exists()
    assert not (tmp_path / "sweep_summary.txt").exists()


@pytest.mark.slow
def test_bulged_strip_converges_at_third_order(tmp_path, write_config):
    path = write_config("fiber.profile = bump\nspectrum.n_eigs = 1\nsweep.nx = 400\nsweep.nn = 64\n")
    assert _run("sweep", path, tmp_path, "--threads", "2") == 0
    meta, report = read_csv(tmp_path / "sweep_report.csv")
    assert float(meta["theory_order"]) == 3.0
    assert len(report["eps"]) == 5
    assert np.all(report["disc_error"] <= 0.1 * report["error"].min())
    assert _fitted_order(tmp_path) >= 2.5


@pytest.mark.slow
def test_hollow_constriction_converges_at_third_order(tmp_path, write_config):
    path = write_config("fiber.shape = disc\nfiber.profile = constriction\nhollow = true\nspectrum.n_eigs = 1\nsweep.nx = 800\n")
    assert _run("sweep", path, tmp_path) == 0
    assert _fitted_order(tmp_path) >= 2.5


@pytest.mark.slow
def test_bulged_tube_converges_at_third_order(tmp_path, write_config):
    path = write_config("fiber.shape = disc\nfiber.profile = bump\nspectrum.n_eigs = 1\nsweep.nx = 800\nsweep.nn = 64\n")
    assert _run("sweep", path, tmp_path, "--threads", "2") == 0
    meta, report = read_csv(tmp_path / "sweep_report.csv")
    assert float(meta["theory_order"]) == 3.0
    assert np.all(report["disc_error"] <= 0.1 * report["error"].min())
    assert _fitted_order(tmp_path) >= 2.5
