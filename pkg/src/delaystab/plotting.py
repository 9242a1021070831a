"""Figure rendering for traces and stability charts.

Figures are rendered headless (Agg) and written next to the delimited
output; the file extension picks the matplotlib backend format (svg, png,
pdf). CSV remains the canonical data product, figures are a view of it.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .simulator import Trace

__all__ = ["trace_figure", "chart_figure", "save_figure"]

#: region label -> fill color, matching the chart's grey-scale convention
_REGION_COLORS = {
    1: "#b0b0b0",
    2: "#d9d9d9",
    3: "#ffffff",
    4: "#f2e8e8",
    5: "#5a5a5a",
}

_REGION_NAMES = {
    1: "delay-independent stable",
    2: "stable for any distribution with this mean",
    3: "stable for this distribution",
    4: "unstable for this distribution",
    5: "delay-independent unstable",
}


def trace_figure(traces: list[tuple[str, Trace]], title: str = "", target: float | None = None):
    """Line plot of one or more simulation traces."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for label, tr in traces:
        ax.plot(tr.t, tr.x, lw=1.0, label=label)
    if target is not None:
        ax.axhline(target, color="k", lw=0.6, ls=":")
    ax.set_xlabel("t")
    ax.set_ylabel("x")
    if title:
        ax.set_title(title)
    if len(traces) > 1:
        ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    return fig


def chart_figure(a_vals: np.ndarray, b_vals: np.ndarray, labels: np.ndarray,
                 boundaries: dict[str, np.ndarray], intersection: tuple[float, float],
                 title: str = ""):
    """Region map in the (a, b) plane with analytic boundary overlays.

    ``labels`` is indexed ``[i_b, i_a]`` (row-major grid), ``boundaries``
    maps a name to an ``(n, 2)`` polyline array.
    """
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    cmap = matplotlib.colors.ListedColormap([_REGION_COLORS[k] for k in range(1, 6)])
    norm = matplotlib.colors.BoundaryNorm(np.arange(0.5, 6.0), cmap.N)
    ax.pcolormesh(a_vals, b_vals, labels, cmap=cmap, norm=norm, shading="nearest")
    for name, poly in boundaries.items():
        if poly.size:
            ax.plot(poly[:, 0], poly[:, 1], "k-", lw=1.2)
            ax.annotate(name, poly[len(poly) // 2], fontsize=8,
                        textcoords="offset points", xytext=(3, 3))
    ax.plot([intersection[0]], [intersection[1]], "ko", ms=5)
    ax.annotate(f"({intersection[0]:.3f}, {intersection[1]:.3f})", intersection,
                fontsize=8, textcoords="offset points", xytext=(5, -10))
    handles = [matplotlib.patches.Patch(facecolor=_REGION_COLORS[k], edgecolor="k",
                                        label=f"({k}) {_REGION_NAMES[k]}") for k in range(1, 6)]
    ax.legend(handles=handles, loc="upper left", fontsize=7)
    ax.set_xlabel("a")
    ax.set_ylabel("b")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return fig


def save_figure(fig, path) -> None:
    fig.savefig(path)
    plt.close(fig)
