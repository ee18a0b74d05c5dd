"""Gradient-based contribution analysis of fitted models.

The gradient of each predicted value with respect to the inputs at the
same time step, multiplied elementwise with those inputs, yields a
time-by-descriptor contribution graph: a descriptor the model is
sensitive to still contributes nothing while it is zero valued.
Subtracting the graphs of two models fitted to two performances of one
score shows which descriptors one performance leans on more than the
other.  Graphs render as diverging-color heatmaps (orange positive,
purple negative) plus exact CSV.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .basis import BasisMatrix
from .models import (BiRNNParams, FFNNParams, LinParams, birnn_forward,
                     ffnn_forward)
from .util import fmt17

LOGGER = logging.getLogger(__name__)


@dataclass(eq=False)
class SensitivityGraph:
    """Per-cell contribution (gradient times input) of one model."""

    times: np.ndarray
    columns: list
    data: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.data = np.asarray(self.data, dtype=float)


@dataclass(eq=False)
class SDGraph(SensitivityGraph):
    """Difference of two contribution graphs over one score."""

    label_a: str = "A"
    label_b: str = "B"


def _as_data(matrix):
    if isinstance(matrix, BasisMatrix):
        return matrix.data
    return np.asarray(matrix, dtype=float)


def input_gradients(params, matrix) -> np.ndarray:
    """Rows of same-time-step output/input partial derivatives.

    For the recurrent model this is the derivative of y_t with respect
    to the inputs at t through both direction's cells; cross-time terms
    (the influence of inputs at t on outputs elsewhere) are excluded so
    the result has one value per (time, descriptor) cell.
    """
    X = _as_data(matrix)
    if X.shape[1] != params.n_inputs:
        raise ValueError(f"matrix has {X.shape[1]} columns but the model "
                         f"expects {params.n_inputs}")
    if isinstance(params, LinParams):
        return np.tile(params.w, (X.shape[0], 1))
    if isinstance(params, FFNNParams):
        hidden, _ = ffnn_forward(params, X)
        return ((1.0 - hidden * hidden) * params.w2) @ params.W1
    if isinstance(params, BiRNNParams):
        hf, hb, _ = birnn_forward(params, X)
        return (((1.0 - hf * hf) * params.v_f) @ params.fw.Win
                + ((1.0 - hb * hb) * params.v_b) @ params.bw.Win)
    raise TypeError(f"unknown parameter type {type(params).__name__}")


def sensitivity_graph(params, matrix) -> SensitivityGraph:
    """Elementwise gradient-times-input contribution graph."""
    X = _as_data(matrix)
    grads = input_gradients(params, matrix)
    times = matrix.times if isinstance(matrix, BasisMatrix) \
        else np.arange(X.shape[0], dtype=float)
    columns = list(matrix.columns) if isinstance(matrix, BasisMatrix) else []
    return SensitivityGraph(times=times, columns=columns, data=grads * X)


def sd_graph(params_a, params_b, matrix, label_a: str = "A",
             label_b: str = "B") -> SDGraph:
    """Contribution difference of two parameter sets on one matrix.

    Both parameter sets must address the same columns (one shared
    vocabulary, one score, hence one matrix).
    """
    if params_a.n_inputs != params_b.n_inputs:
        raise ValueError("parameter sets expect different column counts "
                         f"({params_a.n_inputs} vs {params_b.n_inputs})")
    graph_a = sensitivity_graph(params_a, matrix)
    graph_b = sensitivity_graph(params_b, matrix)
    return SDGraph(times=graph_a.times, columns=graph_a.columns,
                   data=graph_a.data - graph_b.data,
                   label_a=label_a, label_b=label_b)


def rank_influential(graph: SensitivityGraph, window, top_k: int) -> list:
    """Columns ranked by mean absolute contribution inside a window.

    ``window`` is a (start_beat, end_beat) interval that must overlap
    the grid; ties break by canonical column order.
    """
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    lo, hi = float(window[0]), float(window[1])
    mask = (graph.times >= lo) & (graph.times <= hi)
    if not mask.any():
        raise ValueError(f"window [{fmt17(lo)}, {fmt17(hi)}] contains no "
                         "grid points")
    scores = np.abs(graph.data[mask]).mean(axis=0)
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
    return [(graph.columns[j] if graph.columns else j, float(scores[j]))
            for j in order[:top_k]]


# ---------------------------------------------------------------------------
# Rendering

_POSITIVE_RGB = (230, 97, 1)    # orange: stronger contribution in A
_NEGATIVE_RGB = (94, 60, 153)   # purple: stronger contribution in B


@dataclass
class HeatmapOptions:
    top_k: int = 12
    window: tuple | None = None
    time_signatures: tuple = ()
    title: str = ""
    cell_height: int = 18
    plot_width: int = 840
    label_width: int = 190


def _cell_fill(value: float, vmax: float) -> str:
    f = min(1.0, abs(value) / vmax) if vmax > 0 else 0.0
    base = _POSITIVE_RGB if value >= 0 else _NEGATIVE_RGB
    r, g, b = (round(255 + (c - 255) * f) for c in base)
    return f"rgb({r},{g},{b})"


def _bar_starts(time_signatures, first_beat: float, last_beat: float):
    """(beat, bar_number) pairs for bar lines derived from the meters."""
    if not time_signatures:
        return []
    sigs = sorted((float(p), n, d) for p, n, d in time_signatures)
    bars = []
    beat = sigs[0][0]
    number = 1
    idx = 0
    while beat <= last_beat + 1e-9:
        while idx + 1 < len(sigs) and beat >= sigs[idx + 1][0] - 1e-9:
            idx += 1
        if beat >= first_beat - 1e-9:
            bars.append((beat, number))
        _, num, den = sigs[idx]
        beat += num * 4.0 / den
        number += 1
    return bars


def render_heatmap(graph: SensitivityGraph,
                   options: HeatmapOptions | None = None) -> str:
    """Self-contained SVG heatmap of the most influential rows.

    Cells use a diverging two-hue map centered at zero with a symmetric
    range of the maximum absolute value; the x axis is labeled in beats
    with bar lines when meters are supplied.
    """
    opts = options or HeatmapOptions()
    if graph.data.size == 0:
        raise ValueError("empty graph")
    window = opts.window or (graph.times[0], graph.times[-1])
    ranked = rank_influential(graph, window, min(opts.top_k,
                                                 graph.data.shape[1]))
    col_index = {c: j for j, c in enumerate(graph.columns)}
    selected = [col_index[c] if graph.columns else c for c, _ in ranked]
    labels = [c.name if graph.columns else f"column {c}" for c, _ in ranked]

    sub = graph.data[:, selected]
    vmax = float(np.abs(sub).max())

    times = graph.times
    widths = np.diff(times)
    last_width = widths[-1] if len(widths) else 1.0
    span_lo = times[0]
    span_hi = times[-1] + last_width
    scale = opts.plot_width / (span_hi - span_lo)

    def x_of(beat):
        return opts.label_width + (beat - span_lo) * scale

    top = 58
    height = top + len(selected) * opts.cell_height + 46
    width = opts.label_width + opts.plot_width + 20

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f"<!-- dynalens {__version__} -->",
           f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{height}" viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           '<style>text{font-family:monospace;font-size:11px;}'
           '.t{font-size:13px;}</style>']
    title = opts.title
    if isinstance(graph, SDGraph) and not title:
        title = (f"contribution difference: {graph.label_a} (orange) vs "
                 f"{graph.label_b} (purple)")
    if title:
        out.append(f'<text class="t" x="{opts.label_width}" y="20">'
                   f'{title}</text>')
    out.append(f'<text x="{opts.label_width}" y="40">color range '
               f'+/-{vmax:.4g}, centered at 0</text>')

    for r, (j, label) in enumerate(zip(selected, labels)):
        y = top + r * opts.cell_height
        out.append(f'<text x="8" y="{y + opts.cell_height - 5}">'
                   f'{label}</text>')
        for i, t in enumerate(times):
            w = widths[i] if i < len(widths) else last_width
            value = graph.data[i, j]
            out.append(f'<rect x="{x_of(t):.2f}" y="{y}" '
                       f'width="{w * scale:.2f}" '
                       f'height="{opts.cell_height}" '
                       f'fill="{_cell_fill(value, vmax)}"/>')

    axis_y = top + len(selected) * opts.cell_height
    out.append(f'<line x1="{opts.label_width}" y1="{axis_y}" '
               f'x2="{opts.label_width + opts.plot_width}" y2="{axis_y}" '
               f'stroke="black"/>')
    bars = _bar_starts(opts.time_signatures, span_lo, span_hi)
    label_every = max(1, len(bars) // 20) if bars else 1
    for beat, number in bars:
        x = x_of(beat)
        out.append(f'<line x1="{x:.2f}" y1="{top}" x2="{x:.2f}" '
                   f'y2="{axis_y + 4}" stroke="black" stroke-opacity="0.35"/>')
        if (number - 1) % label_every == 0:
            out.append(f'<text x="{x:.2f}" y="{axis_y + 16}">bar {number}'
                       f'</text>')
    out.append(f'<text x="{opts.label_width}" y="{axis_y + 32}">beats '
               f'{fmt17(span_lo)} to {fmt17(times[-1])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def graph_to_csv(graph: SensitivityGraph) -> str:
    header = "beat," + ",".join(c.name for c in graph.columns)
    lines = [header]
    for t, row in zip(graph.times, graph.data):
        lines.append(",".join([fmt17(t)] + [fmt17(v) for v in row]))
    return "\n".join(lines) + "\n"
