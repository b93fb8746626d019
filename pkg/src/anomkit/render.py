"""Instance plot rendering.

Plots are deliberately plain: a single line over the sample index, no
shading, no highlighted regions, no anomaly markers. Raster output is
pinned to an exact pixel size (805 x 124 by default) so downstream
consumers can rely on the geometry; SVG output is also supported.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .errors import ConfigError, DataError

WIDTH_PX = 805
HEIGHT_PX = 124
LINE_COLOR = "#1f77b4"
_DPI = 100


def build_figure(
    values: Sequence[float] | np.ndarray,
    width_px: int = WIDTH_PX,
    height_px: int = HEIGHT_PX,
    line_color: str = LINE_COLOR,
) -> Figure:
    """Line plot of values vs. index at an exact pixel geometry."""
    series = np.asarray(values, dtype=float)
    if series.ndim != 1 or series.size < 2:
        raise DataError("rendering expects a 1-D series with at least 2 samples")
    fig = Figure(figsize=(width_px / _DPI, height_px / _DPI), dpi=_DPI)
    ax = fig.add_axes((0.045, 0.24, 0.945, 0.70))
    ax.plot(np.arange(series.size), series, color=line_color, linewidth=0.7)
    ax.margins(x=0)
    ax.tick_params(labelsize=4.5, width=0.5, length=1.5, colors="black", pad=1.5)
    for spine in ax.spines.values():
        spine.set_linewidth(0.5)
        spine.set_color("black")
    return fig


def save_plot(
    values: Sequence[float] | np.ndarray,
    path: str | Path,
    fmt: str = "png",
    width_px: int = WIDTH_PX,
    height_px: int = HEIGHT_PX,
    line_color: str = LINE_COLOR,
) -> Path:
    """Render the series to ``path``; raster dimensions are exact.

    Output bytes are deterministic for a fixed input and backend; SVG
    output omits the creation date for the same reason.
    """
    path = Path(path)
    fig = build_figure(values, width_px, height_px, line_color)
    try:
        if fmt == "png":
            canvas = FigureCanvasAgg(fig)
            canvas.print_figure(str(path), format="png", dpi=_DPI)
        elif fmt == "svg":
            canvas = FigureCanvasSVG(fig)
            # fixed hash salt and no date: byte-stable output across runs
            with matplotlib.rc_context({"svg.hashsalt": "anomkit"}):
                canvas.print_figure(
                    str(path), format="svg", dpi=_DPI, metadata={"Date": None}
                )
        else:
            raise ConfigError(f"unsupported plot format {fmt!r}")
    except OSError as exc:
        raise DataError(f"cannot write plot to {path}: {exc}") from exc
    return path


def save_class_f1_chart(
    labels: Sequence[str], f1_scores: Sequence[float], path: str | Path
) -> Path:
    """Bar chart of per-class F1 for evaluation reports."""
    path = Path(path)
    fig = Figure(figsize=(6.4, 3.2), dpi=_DPI)
    ax = fig.add_subplot(111)
    positions = np.arange(len(labels))
    ax.bar(positions, np.asarray(f1_scores, dtype=float), color=LINE_COLOR)
    ax.set_xticks(positions)
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("affinity F1")
    canvas = FigureCanvasAgg(fig)
    try:
        canvas.print_figure(str(path), format="png", dpi=_DPI)
    except OSError as exc:
        raise DataError(f"cannot write plot to {path}: {exc}") from exc
    return path
