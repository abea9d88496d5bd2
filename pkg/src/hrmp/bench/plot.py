"""Scatter plots of labelled points as standalone SVG."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from ..geometry import PointSet

PALETTE = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
]
OUTLIER_COLOR = "#b0b0b0"


def label_color(label: int) -> str:
    return OUTLIER_COLOR if label == 0 else PALETTE[(label - 1) % len(PALETTE)]


def render_svg(points, labels, width: int = 480, height: int = 480, margin: int = 20) -> str:
    """SVG text with one circle per point (first two coordinates), coloured by label.

    Outliers (label 0) are drawn as small grey crosses. Output depends only on
    the inputs, so identical inputs give identical bytes.
    """
    data = points.data if isinstance(points, PointSet) else np.asarray(points, dtype=float).reshape(-1, 2)
    labels = np.asarray(labels, dtype=int).ravel()
    if labels.size != data.shape[0]:
        raise ValueError(f"{labels.size} labels for {data.shape[0]} points")
    xy = data[:, :2]
    legend = sorted(set(labels.tolist()) - {0})
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height + 20 * (len(legend) + 1)}">',
        f'<rect x="{margin}" y="{margin}" width="{plot_w}" height="{plot_h}" fill="white" stroke="black"/>',
    ]
    if xy.shape[0]:
        lo = xy.min(axis=0)
        span = np.ptp(xy, axis=0)
        span[span == 0] = 1.0
        px = margin + (xy[:, 0] - lo[0]) / span[0] * plot_w
        py = margin + plot_h - (xy[:, 1] - lo[1]) / span[1] * plot_h  # y up
        for x, y, l in zip(px, py, labels):
            if l == 0:
                out.append(f'<path d="M{x - 2:.2f},{y - 2:.2f}L{x + 2:.2f},{y + 2:.2f}M{x - 2:.2f},{y + 2:.2f}'
                           f'L{x + 2:.2f},{y - 2:.2f}" stroke="{OUTLIER_COLOR}"/>')
            else:
                out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" fill="{label_color(l)}"/>')
    # legend: one entry per structure label, then outliers
    y0 = height + 5
    out.append('<g class="legend" font-family="sans-serif" font-size="12">')
    for row, l in enumerate(legend + [0]):
        y = y0 + 20 * row
        name = "outliers" if l == 0 else f"structure {l}"
        out.append(f'<rect x="{margin}" y="{y}" width="10" height="10" fill="{label_color(l)}"/>')
        out.append(f'<text x="{margin + 16}" y="{y + 10}">{escape(name)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(points, labels, path) -> None:
    Path(path).write_text(render_svg(points, labels))
