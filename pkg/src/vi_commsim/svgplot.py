"""Minimal self-contained SVG line charts (no external tooling, no remote
references; output is deterministic for identical inputs)."""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from typing import Sequence
from xml.etree import ElementTree as ET

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 72, 18, 42, 54


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray


def _nice_step(span: float, target: int) -> float:
    raw = span / max(target, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            return mult * mag
    return 10.0 * mag


def _ticks(lo: float, hi: float, target: int = 6):
    if not math.isfinite(lo) or not math.isfinite(hi):
        lo, hi = 0.0, 1.0
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    step = _nice_step(hi - lo, target)
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return lo, hi, ticks


def _fmt_tick(v: float) -> str:
    return format(v, ".6g")


def line_chart(
    series: Sequence[Series],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    width: int = 760,
    height: int = 520,
) -> str:
    """Render polyline series into a standalone SVG document string."""
    pts = []
    for s in series:
        x = np.asarray(s.x, dtype=float)
        y = np.asarray(s.y, dtype=float)
        keep = np.isfinite(x) & np.isfinite(y)
        pts.append((s.label, x[keep], y[keep]))

    xs = np.concatenate([p[1] for p in pts]) if pts else np.array([])
    ys = np.concatenate([p[2] for p in pts]) if pts else np.array([])
    if xs.size:
        x_lo, x_hi, x_ticks = _ticks(float(xs.min()), float(xs.max()))
        y_lo, y_hi, y_ticks = _ticks(float(ys.min()), float(ys.max()))
    else:
        x_lo, x_hi, x_ticks = _ticks(0.0, 1.0)
        y_lo, y_hi, y_ticks = _ticks(0.0, 1.0)

    plot_w = width - _MARGIN_L - _MARGIN_R
    plot_h = height - _MARGIN_T - _MARGIN_B

    def px(v):
        return _MARGIN_L + (v - x_lo) / (x_hi - x_lo) * plot_w

    def py(v):
        return _MARGIN_T + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h

    svg = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        width=str(width),
        height=str(height),
        viewBox=f"0 0 {width} {height}",
    )
    ET.SubElement(svg, "rect", x="0", y="0", width=str(width), height=str(height),
                  fill="white")
    font = "font-family: Helvetica, Arial, sans-serif;"

    if title:
        t = ET.SubElement(svg, "text", x=str(width / 2), y="24",
                          style=f"{font} font-size: 15px; text-anchor: middle;")
        t.text = title

    # gridlines and tick labels
    for v in x_ticks:
        ET.SubElement(svg, "line", x1=f"{px(v):.2f}", x2=f"{px(v):.2f}",
                      y1=str(_MARGIN_T), y2=str(_MARGIN_T + plot_h),
                      stroke="#dddddd", **{"stroke-width": "1"})
        lab = ET.SubElement(svg, "text", x=f"{px(v):.2f}",
                            y=str(_MARGIN_T + plot_h + 18),
                            style=f"{font} font-size: 11px; text-anchor: middle;")
        lab.text = _fmt_tick(v)
    for v in y_ticks:
        ET.SubElement(svg, "line", y1=f"{py(v):.2f}", y2=f"{py(v):.2f}",
                      x1=str(_MARGIN_L), x2=str(_MARGIN_L + plot_w),
                      stroke="#dddddd", **{"stroke-width": "1"})
        lab = ET.SubElement(svg, "text", x=str(_MARGIN_L - 8),
                            y=f"{py(v) + 4:.2f}",
                            style=f"{font} font-size: 11px; text-anchor: end;")
        lab.text = _fmt_tick(v)

    # axes
    ET.SubElement(svg, "rect", x=str(_MARGIN_L), y=str(_MARGIN_T),
                  width=str(plot_w), height=str(plot_h),
                  fill="none", stroke="#333333", **{"stroke-width": "1"})

    if xlabel:
        lab = ET.SubElement(svg, "text", x=str(_MARGIN_L + plot_w / 2),
                            y=str(height - 14),
                            style=f"{font} font-size: 12px; text-anchor: middle;")
        lab.text = xlabel
    if ylabel:
        cx, cy = 18, _MARGIN_T + plot_h / 2
        lab = ET.SubElement(svg, "text", x=str(cx), y=str(cy),
                            transform=f"rotate(-90 {cx} {cy})",
                            style=f"{font} font-size: 12px; text-anchor: middle;")
        lab.text = ylabel

    for i, (label, x, y) in enumerate(pts):
        color = PALETTE[i % len(PALETTE)]
        if x.size:
            coords = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
            ET.SubElement(svg, "polyline", points=coords, fill="none",
                          stroke=color, **{"stroke-width": "1.6"})

    # legend, top-right inside the plot area
    for i, (label, _, _) in enumerate(pts):
        color = PALETTE[i % len(PALETTE)]
        ly = _MARGIN_T + 16 + 18 * i
        lx = _MARGIN_L + plot_w - 170
        ET.SubElement(svg, "line", x1=str(lx), x2=str(lx + 26),
                      y1=str(ly), y2=str(ly), stroke=color,
                      **{"stroke-width": "2"})
        lab = ET.SubElement(svg, "text", x=str(lx + 32), y=str(ly + 4),
                            style=f"{font} font-size: 12px;")
        lab.text = label

    return ET.tostring(svg, encoding="unicode", xml_declaration=True)


def write_svg(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".svg.tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
