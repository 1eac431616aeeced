"""Deterministic SVG figures: scenario, sensor network, OSPA vs time, OSPA vs consensus iterations."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..scenario import Scenario  # noqa: E402
from .experiment import ResultRow, per_step_means  # noqa: E402

plt.rcParams["svg.hashsalt"] = "dvbtrack"
plt.rcParams["svg.fonttype"] = "path"

_SVG_META = {"Date": None, "Creator": "dvbtrack"}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def plot_scenario(sc: Scenario, path: str | Path, sensor: int = 0) -> Path:
    """Measurements of one sensor over all scans, true trajectories and start points."""
    fig, ax = plt.subplots(figsize=(6, 6))
    pts = np.concatenate([row[sensor].measurements for row in sc.batches])
    ax.scatter(pts[:, 0], pts[:, 1], s=1, c="0.7", label="measurements", rasterized=False)
    pos = sc.truth.states[:, :, [0, 2]]
    for k in range(pos.shape[1]):
        ax.plot(pos[:, k, 0], pos[:, k, 1], "k-", lw=1)
    ax.scatter(pos[0, :, 0], pos[0, :, 1], s=30, facecolors="none", edgecolors="g", label="start")
    xmin, xmax, ymin, ymax = sc.config.region
    ax.set_xlim(xmin, xmax)
    ax.set_ylim(ymin, ymax)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_aspect("equal")
    return _save(fig, Path(path))


def plot_network(sc: Scenario, path: str | Path) -> Path:
    g = sc.graph
    if g.positions is None:
        angles = 2 * np.pi * np.arange(g.n_sensors) / max(g.n_sensors, 1)
        positions = np.column_stack([np.cos(angles), np.sin(angles)])
    else:
        positions = g.positions
    fig, ax = plt.subplots(figsize=(5, 5))
    for i, j in g.edges(0):
        ax.plot(positions[[i, j], 0], positions[[i, j], 1], "k-", lw=0.8)
    ax.scatter(positions[:, 0], positions[:, 1], s=60, facecolors="none", edgecolors="b", zorder=3)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    return _save(fig, Path(path))


def plot_ospa_time(rows: Sequence[ResultRow], path: str | Path) -> Path:
    if not rows:
        raise ValueError("no result rows to plot")
    means = per_step_means(rows)
    fig, ax = plt.subplots(figsize=(7, 4))
    for key in sorted(means):
        ax.plot(np.arange(1, len(means[key]) + 1), means[key], marker=".", label=key)
    ax.set_xlabel("time step")
    ax.set_ylabel("mean OSPA")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, Path(path))


def plot_ospa_iterations(sweep: Sequence[tuple[int, float, float]], path: str | Path) -> Path:
    if not sweep:
        raise ValueError("no sweep rows to plot")
    iters = [r[0] for r in sweep]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(iters, [r[1] for r in sweep], "o-", label="distributed")
    ax.axhline(sweep[0][2], color="k", ls="--", label="centralised")
    ax.set_xlabel("consensus iterations")
    ax.set_ylabel("mean OSPA")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, Path(path))
