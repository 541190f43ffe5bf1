"""Matplotlib report figures written alongside the CSV outputs.

Import stays lazy-friendly: the Agg backend is forced before pyplot so
the CLI can render headless.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import dde  # noqa: E402
from .jacobian import HSweepRow, StabilityIndicators  # noqa: E402
from .numerics import PseudospectrumGrid  # noqa: E402

plt.rcParams.update({
    "font.size": 9,
    "axes.titlesize": 10,
    "figure.dpi": 150,
    "savefig.bbox": "tight",
})


def _finish(fig, path):
    fig.savefig(path)
    plt.close(fig)


def fig_trajectory(traj: dde.Trajectory, path, thin: int = 10) -> None:
    t = traj.node_times()[::thin]
    s = traj.states[::thin]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3))
    ax1.plot(t, s[:, 0], label="ACTH x", lw=0.8)
    ax1.plot(t, s[:, 1], label="cortisol y", lw=0.8)
    ax1.set_xlabel(r"$\tau$")
    ax1.legend(frameon=False)
    ax2.plot(s[:, 0], s[:, 1], lw=0.6, color="tab:green")
    ax2.set_xlabel("x")
    ax2.set_ylabel("y")
    ax2.set_title("phase plane")
    _finish(fig, path)


def fig_cycle(cycle: dde.LimitCycle, path) -> None:
    taus, states = cycle.sample(1000)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3))
    ax1.plot(taus, states[:, 0], label="x")
    ax1.plot(taus, states[:, 1], label="y")
    ax1.set_xlabel(r"$\tau$")
    ax1.set_title(f"period {cycle.period:.4f}")
    ax1.legend(frameon=False)
    ax2.plot(states[:, 0], states[:, 1], color="tab:green")
    ax2.set_xlabel("x")
    ax2.set_ylabel("y")
    _finish(fig, path)


def fig_indicators(cycle: dde.LimitCycle, indicators: Sequence[StabilityIndicators],
                   path) -> None:
    """Four panels: cycle states, spectral abscissa, axis distance, index."""
    taus = np.array([s.tau for s in indicators])
    alpha = np.array([s.alpha for s in indicators])
    d = np.array([np.nan if s.d is None else s.d for s in indicators])
    idx = np.array([np.nan if s.index is None else s.index for s in indicators])
    states = cycle.state(taus)
    fig, axes = plt.subplots(1, 4, figsize=(12, 2.6))
    axes[0].plot(taus, states[:, 0], label="x")
    axes[0].plot(taus, states[:, 1], label="y")
    axes[0].legend(frameon=False)
    axes[0].set_title("(a) trajectories")
    axes[1].plot(taus, alpha, color="tab:red")
    axes[1].axhline(0.0, color="k", lw=0.5, ls=":")
    axes[1].set_title(r"(b) spectral abscissa $\alpha$")
    axes[2].plot(taus, d, color="tab:blue")
    axes[2].set_title(r"(c) distance to instability $d_\tau$")
    axes[3].plot(taus, idx, color="tab:purple")
    axes[3].set_title(r"(d) index $-\alpha/d_\tau$")
    for ax in axes:
        ax.set_xlabel(r"$\tau$")
    _finish(fig, path)


def fig_grid_contours(grid: PseudospectrumGrid, levels, path,
                      eigs: np.ndarray | None = None, overlay: str = "none",
                      title: str | None = None) -> None:
    """Log-scaled contour plot with eigenvalue markers and stability overlay."""
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    X, Y = np.meshgrid(grid.re_axis, grid.im_axis)
    safe = np.maximum(grid.values, 1e-300)
    cs = ax.contour(X, Y, np.log10(safe), levels=np.log10(np.asarray(levels)),
                    cmap="viridis", linewidths=0.9)
    fig.colorbar(cs, ax=ax, label=r"$\log_{10}\epsilon$", shrink=0.85)
    if overlay == "axis":
        ax.axvline(0.0, color="magenta", ls=":", lw=1.2)
    elif overlay == "circle":
        th = np.linspace(0, 2 * np.pi, 256)
        ax.plot(np.cos(th), np.sin(th), color="magenta", ls=":", lw=1.2)
    if eigs is not None and len(eigs):
        eigs = np.asarray(eigs, dtype=complex)
        ax.plot(eigs.real, eigs.imag, "r.", ms=5)
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    if title:
        ax.set_title(title)
    ax.set_xlim(grid.re_axis[0], grid.re_axis[-1])
    ax.set_ylim(grid.im_axis[0], grid.im_axis[-1])
    _finish(fig, path)


def fig_jacobian_hsweep(rows: Sequence[HSweepRow], path) -> None:
    hs = [r.h for r in rows if r.error is None]
    ma = [r.max_alpha for r in rows if r.error is None]
    mi = [r.max_index for r in rows if r.error is None]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7, 2.8))
    ax1.plot(hs, ma, "o-", ms=3)
    ax1.set_xlabel("h")
    ax1.set_ylabel(r"max $\alpha$")
    ax2.plot(hs, mi, "o-", ms=3, color="tab:purple")
    ax2.set_xlabel("h")
    ax2.set_ylabel(r"max $-\alpha/d_\tau$")
    _finish(fig, path)


def fig_kreiss_sweep(hs, kreiss, path, ylabel: str = "Kreiss constant",
                     mark_h: float | None = 7.66) -> None:
    fig, ax = plt.subplots(figsize=(4, 2.8))
    ax.plot(hs, kreiss, "o-", ms=3)
    if mark_h is not None and len(hs) and min(hs) <= mark_h <= max(hs):
        ax.axvline(mark_h, color="k", ls="--", lw=0.8)
    ax.set_xlabel("h")
    ax.set_ylabel(ylabel)
    _finish(fig, path)


def fig_eigenfunctions(fields: Sequence[np.ndarray], extents, labels, path) -> None:
    """Panels of complex observable fields on a 2-D slice (real part shown)."""
    n = len(fields)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 2.8))
    if n == 1:
        axes = [axes]
    for ax, field, label in zip(axes, fields, labels):
        im = ax.imshow(np.real(field), origin="lower", extent=extents,
                       aspect="auto", cmap="RdBu_r")
        fig.colorbar(im, ax=ax, shrink=0.8)
        ax.set_title(label)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    _finish(fig, path)
