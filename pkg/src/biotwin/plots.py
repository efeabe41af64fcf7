"""Report figures rendered next to the delimited outputs.

Joint-angle curves, marker height traces, and per-frame IK residuals as
PNG files. Uses the Agg backend so the CLI works headless.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .trcio import MotionTable  # noqa: E402
from .twin import MarkerTrajectory  # noqa: E402


def plot_joint_angles(table: MotionTable, path: str | Path) -> Path:
    """Grid of one subplot per generalized coordinate over time."""
    path = Path(path)
    num_coords = len(table.column_names) - 1
    cols = min(3, max(1, num_coords))
    rows = (num_coords + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(4.0 * cols, 2.6 * rows), squeeze=False)
    time = table.data[:, 0]
    unit = "deg" if table.in_degrees else "rad"
    for i, name in enumerate(table.column_names[1:]):
        ax = axes[i // cols][i % cols]
        ax.plot(time, table.data[:, i + 1], lw=1.2)
        ax.set_title(name, fontsize=9)
        ax.set_xlabel("time [s]", fontsize=8)
        ax.set_ylabel(f"[{unit}]", fontsize=8)
        ax.tick_params(labelsize=7)
        ax.grid(True, alpha=0.3)
    for i in range(num_coords, rows * cols):
        axes[i // cols][i % cols].axis("off")
    fig.suptitle(table.name)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_marker_heights(traj: MarkerTrajectory, path: str | Path) -> Path:
    """Vertical coordinate of every marker over time, ground line at 0."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    time = np.arange(traj.num_frames) / traj.frame_rate_hz
    for m, name in enumerate(traj.marker_names):
        ax.plot(time, traj.positions[:, m, 1], lw=0.9, label=name)
    ax.axhline(0.0, color="k", lw=0.8, ls="--")
    ax.set_xlabel("time [s]")
    ax.set_ylabel(f"y [{traj.units}]")
    ax.set_title("marker heights")
    if traj.num_markers <= 12:
        ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_frame_residuals(times: np.ndarray, rms: np.ndarray, path: str | Path) -> Path:
    """Per-frame RMS marker residual of an IK solve."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(8, 3.2))
    ax.plot(np.asarray(times), np.asarray(rms), lw=1.0)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("RMS residual [m]")
    ax.set_title("IK marker residual per frame")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
