"""Figure rendering for the CLI report paths.

Every report command drops a PNG next to its delimited output unless
--no-plot is given.  Only file rendering, never interactive windows.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = [
    "render_trajectory",
    "render_radial",
    "render_modes",
    "render_hj",
    "render_field_kg",
    "render_maxwell",
]

_DPI = 150


def _save(fig, path):
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_trajectory(traj, energies, path):
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), constrained_layout=True)
    ax = axes[0]
    if traj.q.shape[1] >= 2:
        ax.plot(traj.q[:, 0], traj.q[:, 1], lw=0.8)
        ax.scatter([traj.q[0, 0]], [traj.q[0, 1]], marker="o", s=25, zorder=3)
        ax.set_xlabel("q1")
        ax.set_ylabel("q2")
        ax.set_aspect("equal", "datalim")
    else:
        ax.plot(traj.t, traj.q[:, 0], lw=0.8)
        ax.set_xlabel("t")
        ax.set_ylabel("q1")
    ax.set_title("configuration path")
    ax = axes[1]
    ax.plot(traj.t, energies - energies[0], lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("E(t) - E(0)")
    ax.set_title("energy drift")
    _save(fig, path)


def render_radial(r_grid, veff_vals, E, turning, trace_xy, path):
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), constrained_layout=True)
    ax = axes[0]
    ax.plot(r_grid, veff_vals, lw=1.0, label="V_eff")
    ax.axhline(E, color="C3", lw=0.8, label="E")
    for rt in turning:
        ax.axvline(rt, color="C2", lw=0.8, ls="--")
    lo = min(E, np.min(veff_vals))
    ax.set_ylim(lo - 0.2 * abs(lo), max(1.0, E) + 0.5)
    ax.set_xlabel("r")
    ax.set_ylabel("V_eff(r)")
    ax.legend()
    ax.set_title("effective potential")
    ax = axes[1]
    x, y = trace_xy
    ax.plot(x, y, lw=0.9)
    ax.scatter([0], [0], marker="+", color="k")
    ax.set_aspect("equal", "datalim")
    ax.set_title("orbit r(phi)")
    _save(fig, path)


def render_modes(modeset, path):
    n = modeset.n
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), constrained_layout=True)
    ax = axes[0]
    ax.bar(np.arange(1, n + 1), np.where(np.isnan(modeset.frequencies), 0.0,
                                         modeset.frequencies))
    ax.set_xlabel("mode")
    ax.set_ylabel("omega")
    ax.set_title("characteristic frequencies")
    ax = axes[1]
    for k in range(n):
        ax.plot(np.arange(1, n + 1), modeset.eigenvectors[:, k], marker="o",
                label=f"mode {k+1}")
    ax.set_xlabel("component")
    ax.legend(fontsize=8)
    ax.set_title("mode shapes")
    _save(fig, path)


def render_hj(ts, C, c1, path):
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), constrained_layout=True)
    axes[0].plot(ts, C - C[0], lw=0.8)
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("C(t) - C(0)")
    axes[0].set_title("energy constant drift")
    axes[1].plot(ts, c1 - c1[0], lw=0.8)
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("c1(t) - c1(0)")
    axes[1].set_title("separation constant drift")
    _save(fig, path)


def render_field_kg(x, phi, pi, ts, energies, momenta, path):
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), constrained_layout=True)
    axes[0].plot(x, phi, lw=0.9, label="phi")
    axes[0].plot(x, pi, lw=0.9, label="pi")
    axes[0].set_xlabel("x")
    axes[0].legend()
    axes[0].set_title("final snapshot")
    axes[1].plot(ts, energies - energies[0], lw=0.8, label="E - E(0)")
    axes[1].plot(ts, momenta - momenta[0], lw=0.8, label="P - P(0)")
    axes[1].set_xlabel("t")
    axes[1].legend()
    axes[1].set_title("charge drift")
    _save(fig, path)


def render_maxwell(ts, div_e, div_b, energies, path):
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), constrained_layout=True)
    floor = 1e-18
    axes[0].semilogy(ts, np.maximum(div_e, floor), lw=0.8, label="max |div E|")
    axes[0].semilogy(ts, np.maximum(div_b, floor), lw=0.8, label="max |div B|")
    axes[0].set_xlabel("t")
    axes[0].legend()
    axes[0].set_title("divergence constraints")
    axes[1].plot(ts, energies - energies[0], lw=0.8)
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("energy drift")
    axes[1].set_title("field energy")
    _save(fig, path)
