"""Self-contained SVG figures for benchmark runs.

Rendering is forced onto the Agg backend with a fixed hash salt and no
embedded creation date, so re-plotting the same data yields byte-identical
files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first

matplotlib.rcParams["svg.hashsalt"] = "ictrack"

_SAVE_KWARGS = {"format": "svg", "metadata": {"Date": None}}


def plot_path(path, traces: dict, reference) -> None:
    """y-z plane paths of every controller against the reference curve.

    traces maps controller name to (y, z) arrays; reference is the same
    pair for the reference trajectory.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ref_y, ref_z = reference
    ax.plot(ref_y, ref_z, color="0.3", linestyle="--", linewidth=1.0,
            label="reference")
    for name in sorted(traces):
        y, z = traces[name]
        ax.plot(y, z, linewidth=1.0, label=name)
    ax.set_xlabel("y [m]")
    ax.set_ylabel("z [m]")
    ax.set_title("tracked path")
    ax.grid(True, linewidth=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def plot_solve_times(path, times: dict) -> None:
    """Per-step controller times on a log scale.

    times maps controller name to (t, milliseconds) arrays.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for name in sorted(times):
        t, ms = times[name]
        ax.semilogy(t, ms, linewidth=0.8, label=name)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("solve time [ms]")
    ax.set_title("controller computation time per step")
    ax.grid(True, which="both", linewidth=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
