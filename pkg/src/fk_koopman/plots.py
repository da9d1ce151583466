"""SVG figures of a closed-loop run. Plotting problems are logged, never raised."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # stable element ids and no timestamp, so the files are reproducible
    plt.rcParams["svg.hashsalt"] = "fk-koopman"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def _save(fig, path: Path, description: str):
    fig.savefig(path, format="svg", metadata={"Date": None, "Description": description})


def emit_plots(traj, report=None, directory=".", u_bound: float = 0.1, description: str = "") -> list[Path]:
    """Write ``angles.svg``, ``input.svg`` and ``sync_error.svg``; return the paths written."""
    directory = Path(directory)
    written: list[Path] = []
    try:
        plt = _pyplot()
    except Exception as exc:  # matplotlib missing or backend failure
        log.warning("plotting disabled: %s", exc)
        return written
    t = traj.times
    try:
        fig, ax = plt.subplots(figsize=(7, 3.5))
        for i in range(traj.n_pendulums):
            ax.plot(t, traj.angles[:, i], lw=1.0, label=f"pendulum {i + 1}")
        if traj.references is not None:
            ax.plot(t, traj.references[:, 0], "k--", lw=1.0, label="reference")
        ax.set_xlabel("time [s]")
        ax.set_ylabel("angle [rad]")
        ax.legend(fontsize=7, ncol=2)
        fig.tight_layout()
        _save(fig, directory / "angles.svg", description)
        plt.close(fig)
        written.append(directory / "angles.svg")

        fig, ax = plt.subplots(figsize=(7, 2.5))
        ax.step(t[:-1], traj.inputs, where="post", lw=1.0)
        for b in (-u_bound, u_bound):
            ax.axhline(b, color="r", ls=":", lw=1.0)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("torque [N m]")
        fig.tight_layout()
        _save(fig, directory / "input.svg", description)
        plt.close(fig)
        written.append(directory / "input.svg")

        if traj.references is not None:
            err = np.max(np.abs(traj.angles - traj.references[:, [0]]), axis=1)
            fig, ax = plt.subplots(figsize=(7, 2.5))
            ax.semilogy(t, np.maximum(err, 1e-12), lw=1.0)
            if report is not None:
                ax.axhline(report.epsilon, color="r", ls=":", lw=1.0)
            ax.set_xlabel("time [s]")
            ax.set_ylabel("max angle error [rad]")
            fig.tight_layout()
            _save(fig, directory / "sync_error.svg", description)
            plt.close(fig)
            written.append(directory / "sync_error.svg")
    except Exception as exc:
        log.warning("plotting failed: %s", exc)
        plt.close("all")
    return written
