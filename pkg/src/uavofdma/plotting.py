"""Static figures written next to solver outputs (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_trajectory(path, scenario, trajectory, title: str = "") -> Path:
    """Users and the closed UAV trajectory in the horizontal plane."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 5))
    q = trajectory.waypoints
    ax.plot(q[:, 0], q[:, 1], "-", lw=1.2, label="UAV trajectory")
    ax.plot(q[0, 0], q[0, 1], "o", ms=4, label="start")
    w = scenario.positions
    ax.plot(w[:, 0], w[:, 1], "^", ms=8, label="users")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_sweep(path, parameter: str, grid, columns: dict) -> Path:
    """Throughput versus the swept parameter, one line per trajectory kind."""
    path = Path(path)
    x = np.asarray([g if np.isscalar(g) else np.mean(g) for g in grid], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    for kind, values in columns.items():
        ax.plot(x, np.asarray(values, dtype=float), "o-", ms=4, label=kind)
    ax.set_xlabel({"theta": "MRR", "period_s": "period T (s)"}.get(parameter, parameter))
    ax.set_ylabel("max-min throughput (bps/Hz)")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
