import xml.etree.ElementTree as ET

import numpy as np

from fk_koopman import plots
from fk_koopman.experiments import SyncReport
from fk_koopman.integrator import Trajectory

SVG = "{http://www.w3.org/2000/svg}"


def _run(n=3, steps=40):
    t = np.arange(steps + 1) * 0.005
    states = np.zeros((steps + 1, 2 * n))
    states[:, 0::2] = np.exp(-t)[:, None] * np.arange(1, n + 1)
    refs = np.zeros((steps + 1, 2))
    return Trajectory(0.005, states, 0.05 * np.sin(t[:-1]), references=refs)


def _lines(path):
    root = ET.parse(path).getroot()
    return [g for g in root.iter(f"{SVG}g") if (g.get("id") or "").startswith("line2d")]


def test_writes_three_valid_svgs(tmp_path):
    rep = SyncReport(0.05, np.zeros(3), np.zeros(3), 0.1, 0.0, 0.05)
    paths = plots.emit_plots(_run(), rep, tmp_path, u_bound=0.1, description="seed=1")
    assert [p.name for p in paths] == ["angles.svg", "input.svg", "sync_error.svg"]
    for p in paths:
        ET.parse(p)


def test_angle_plot_has_one_line_per_pendulum_plus_reference(tmp_path):
    plots.emit_plots(_run(n=4), None, tmp_path)
    labels = ET.parse(tmp_path / "angles.svg").getroot()
    text = ET.tostring(labels, encoding="unicode")
    for i in range(1, 5):
        assert f"pendulum {i}" in text
    assert "reference" in text


def test_input_plot_shows_bounds(tmp_path):
    plots.emit_plots(_run(), None, tmp_path, u_bound=0.1)
    # the input trace plus two horizontal bound lines
    assert len(_lines(tmp_path / "input.svg")) >= 3


def test_no_reference_skips_error_plot(tmp_path):
    traj = _run()
    traj.references = None
    paths = plots.emit_plots(traj, None, tmp_path)
    assert [p.name for p in paths] == ["angles.svg", "input.svg"]


def test_repeatable_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    plots.emit_plots(_run(), None, a)
    plots.emit_plots(_run(), None, b)
    assert (a / "angles.svg").read_bytes() == (b / "angles.svg").read_bytes()


def test_failure_is_logged_not_raised(tmp_path, caplog):
    missing = tmp_path / "does" / "not" / "exist"
    assert plots.emit_plots(_run(), None, missing) == []
    assert "plotting failed" in caplog.text
