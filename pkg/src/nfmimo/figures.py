"""Matplotlib figure rendering for the report paths.

Figures are written next to the delimited outputs (CSV/JSON) so results can
be eyeballed without an external plotting step. The Agg backend keeps
everything headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .geometry import VoxelGrid


def volume_projections(values, grid: VoxelGrid, out_path, title: str | None = None) -> None:
    """Max projections of a magnitude volume onto the x-y and y-z planes."""
    mag = np.abs(np.asarray(values))
    xs, ys, zs = (grid.axis_coords(a) for a in range(3))
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))

    front = mag.max(axis=2)  # (nx, ny) -> show y vertical, x horizontal
    im0 = axes[0].imshow(
        front.T, origin="lower", extent=[xs[0], xs[-1], ys[0], ys[-1]], cmap="inferno", aspect="equal"
    )
    axes[0].set_xlabel("x (m)")
    axes[0].set_ylabel("y (m)")
    axes[0].set_title("max projection onto x-y")
    fig.colorbar(im0, ax=axes[0], fraction=0.046)

    side = mag.max(axis=0)  # (ny, nz)
    im1 = axes[1].imshow(
        side, origin="lower", extent=[zs[0], zs[-1], ys[0], ys[-1]], cmap="inferno", aspect="auto"
    )
    axes[1].set_xlabel("z (m)")
    axes[1].set_ylabel("y (m)")
    axes[1].set_title("max projection onto y-z")
    fig.colorbar(im1, ax=axes[1], fraction=0.046)

    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def condition_plot(tables, out_path) -> None:
    """kappa vs separation curves, one line per sweep table."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for table in tables:
        seps = [row.separation_m * 100 for row in table.rows]
        kappas = [row.kappa for row in table.rows]
        ax.semilogy(seps, kappas, marker="o", label=f"{table.n_targets} targets ({table.orientation})")
    ax.set_xlabel("separation (cm)")
    ax.set_ylabel("condition number")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def trace_plot(trace, out_path) -> None:
    """Objective value per outer iteration of the TV solver."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(range(len(trace)), trace, marker="o")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("objective")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def bench_plot(results: dict, out_path) -> None:
    """Mean per-scene runtime bar chart."""
    methods = list(results)
    means = [results[m]["mean_s"] for m in methods]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(methods, means, color="steelblue")
    ax.set_ylabel("mean runtime per scene (s)")
    for i, v in enumerate(means):
        ax.text(i, v, f"{v:.3g}", ha="center", va="bottom", fontsize=9)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
