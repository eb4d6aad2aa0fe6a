"""Figures of level families, cross-sections and chart grids.

Figures are built on a bare :class:`matplotlib.figure.Figure` (no pyplot
state) and saved with a fixed hash salt and no timestamp, so the same
inputs give byte-identical SVG.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib import colormaps
from matplotlib.figure import Figure

from .field import ScalarField
from .regularity import CrossSection
from .straightener import GlobalChart, apply_row, strip_apply
from .tracer import trace_level

RC = {
    "svg.hashsalt": "levelflow",
    "svg.fonttype": "path",
    "font.size": 8,
    "axes.titlesize": 9,
    "axes.linewidth": 0.6,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "lines.linewidth": 0.9,
}


def _figure(window, width: float = 5.0) -> tuple[Figure, object]:
    aspect = (window.ymax - window.ymin) / (window.xmax - window.xmin)
    height = float(np.clip(width * aspect, 1.5, 2.5 * width))
    fig = Figure(figsize=(width, height + 0.4))
    ax = fig.add_subplot(1, 1, 1)
    ax.set_xlim(window.xmin, window.xmax)
    ax.set_ylim(window.ymin, window.ymax)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    return fig, ax


def draw_levels(ax, field: ScalarField, levels, tol: float, cmap: str = "viridis"):
    colours = colormaps[cmap](np.linspace(0.0, 1.0, max(len(levels), 2)))
    for colour, c in zip(colours, levels):
        for comp in trace_level(field, float(c), tol):
            v = comp.vertices
            ax.plot(v[:, 0], v[:, 1], color=colour, lw=0.8)


def draw_mask(ax, field: ScalarField):
    if not field.mask.any():
        return
    w = field.window
    ax.imshow(
        np.where(field.mask, 1.0, np.nan),
        origin="lower",
        extent=(w.xmin + 0.5 * w.dx, w.xmax - 0.5 * w.dx, w.ymin + 0.5 * w.dy, w.ymax - 0.5 * w.dy),
        cmap="Greys",
        vmin=0.0,
        vmax=3.0,
        interpolation="nearest",
        aspect="auto",
    )


def draw_chart_grid(ax, chart: GlobalChart, n_x: int = 9, n_y: int = 4):
    """Images of chart coordinate lines: rows x -> phi(x, y), columns y -> phi(x, y)."""
    for k, strip in enumerate(chart.strips):
        a, b = chart.x_extent(k)
        xs = np.linspace(a, b, 129)
        for y in np.linspace(strip.c_lo, strip.c_hi, n_y + 1)[:-1]:
            p = strip_apply(chart, k, xs, np.full(xs.shape, y))
            ax.plot(p[:, 0], p[:, 1], color="0.55", lw=0.4)
        ys = np.linspace(strip.c_lo, strip.c_hi, 33)
        for x in np.linspace(a, b, n_x):
            p = strip_apply(chart, k, np.full(ys.shape, x), ys)
            ax.plot(p[:, 0], p[:, 1], color="0.55", lw=0.4)
    top = chart.levels[-1]
    xs = np.linspace(*chart.x_extent(len(chart.strips) - 1), 129)
    p = apply_row(chart, xs, top)
    ax.plot(p[:, 0], p[:, 1], color="0.55", lw=0.4)


def draw_sections(ax, sections):
    for s in sections:
        v = s.vertices if isinstance(s, CrossSection) else np.asarray(s)
        ax.plot(v[:, 0], v[:, 1], color="k", lw=1.0, ls="--")


def render(
    field: ScalarField,
    path,
    levels=None,
    n_levels: int = 24,
    sections=(),
    chart: GlobalChart | None = None,
    tol: float | None = None,
    title: str | None = None,
) -> Path:
    """Write a figure of the level family (and optional sections / chart grid)."""
    path = Path(path)
    rng = field.value_range()
    if levels is None:
        lo, hi = rng
        pad = 0.5 * (hi - lo) / n_levels
        levels = np.linspace(lo + pad, hi - pad, n_levels)
    tol = 1e-2 * (rng[1] - rng[0]) if tol is None else tol
    with matplotlib.rc_context(RC):
        fig, ax = _figure(field.window)
        draw_mask(ax, field)
        if chart is not None:
            draw_chart_grid(ax, chart)
        draw_levels(ax, field, levels, tol)
        draw_sections(ax, sections)
        ax.set_title(title if title is not None else f"level lines of {field.text or 'f'}")
        fig.tight_layout()
        kwargs = {"metadata": {"Date": None}} if path.suffix.lower() == ".svg" else {}
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, **kwargs)
    return path
