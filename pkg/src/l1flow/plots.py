"""Figure rendering for solve trajectories and benchmark reports.

All functions write a PNG next to the delimited artifact they
illustrate and return the path written. Rendering is headless (Agg);
nothing here ever opens a window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["plot_trajectory", "plot_bench", "plot_sweep"]

_FIGSIZE = (7.0, 5.0)


def plot_trajectory(trajectory, path, title: str = ""):
    """State components and energy decay along one solve."""
    t = np.array([s.t for s in trajectory.samples])
    z = np.vstack([s.z for s in trajectory.samples])
    e1 = np.array([s.e1 for s in trajectory.samples])
    gnorm = np.array([s.grad_norm for s in trajectory.samples])
    n = z.shape[1] - 1

    fig, (ax_state, ax_energy) = plt.subplots(
        2, 1, figsize=_FIGSIZE, sharex=True, constrained_layout=True
    )
    for j in range(n):
        ax_state.plot(t, z[:, j], label=f"x{j + 1}", linewidth=1.5)
    ax_state.plot(t, z[:, -1], label="mu", linewidth=1.5, linestyle="--", color="k")
    ax_state.set_ylabel("state")
    ax_state.grid(True, alpha=0.3)
    ax_state.legend(loc="best", fontsize=9)
    if title:
        ax_state.set_title(title)

    finite = np.isfinite(e1)
    if finite.any() and (e1[finite] > 0).all():
        ax_energy.semilogy(t, e1, label="E1", linewidth=1.5)
    else:
        ax_energy.plot(t, e1, label="E1", linewidth=1.5)
    pos = np.isfinite(gnorm) & (gnorm > 0)
    if pos.any():
        ax_energy.semilogy(t[pos], gnorm[pos], label="|grad E1|", linewidth=1.0, alpha=0.7)
    ax_energy.set_xlabel("t")
    ax_energy.set_ylabel("energy / gradient")
    ax_energy.grid(True, alpha=0.3)
    ax_energy.legend(loc="best", fontsize=9)

    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_bench(labels, f_values, success_tol, path, title: str = ""):
    """Final objective of every benchmark run against the success line."""
    f = np.asarray(f_values, dtype=float)
    idx = np.arange(len(f))
    floor = 1e-18  # keep exact zeros visible on the log axis

    fig, ax = plt.subplots(figsize=_FIGSIZE, constrained_layout=True)
    ax.semilogy(idx, np.maximum(f, floor), "o", markersize=5)
    ax.axhline(success_tol, color="crimson", linestyle="--", linewidth=1.0,
               label=f"success tol = {success_tol:g}")
    ax.set_xlabel("run")
    ax.set_ylabel("final objective")
    if len(labels) <= 16:
        ax.set_xticks(idx)
        ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    if title:
        ax.set_title(title)

    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_sweep(thetas, mu0s, f_values, path, title: str = ""):
    """Final objective over the theta x mu0 grid, one line per theta."""
    thetas = np.asarray(thetas, dtype=float)
    mu0s = np.asarray(mu0s, dtype=float)
    f = np.asarray(f_values, dtype=float)
    floor = 1e-18

    fig, ax = plt.subplots(figsize=_FIGSIZE, constrained_layout=True)
    for theta in np.unique(thetas):
        mask = thetas == theta
        order = np.argsort(mu0s[mask])
        ax.semilogy(
            mu0s[mask][order],
            np.maximum(f[mask][order], floor),
            "o-",
            label=f"theta = {theta:g}",
            markersize=4,
        )
    ax.set_xlabel("mu0")
    ax.set_ylabel("final objective")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    if title:
        ax.set_title(title)

    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
