"""Minimal SVG 1.1 writer: only ``rect``, ``circle``, ``path`` and ``text`` elements."""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _num(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".")


@dataclass
class Canvas:
    """World box ``[lo, hi]`` mapped onto a ``width x height`` pixel frame, y pointing up."""

    lo: tuple
    hi: tuple
    width: int = 600
    height: int = 600
    pad: int = 30
    items: list = field(default_factory=list)

    def px(self, p: Sequence[float]) -> tuple[float, float]:
        sx = (self.width - 2 * self.pad) / (self.hi[0] - self.lo[0])
        sy = (self.height - 2 * self.pad) / (self.hi[1] - self.lo[1])
        return (self.pad + (p[0] - self.lo[0]) * sx,
                self.height - self.pad - (p[1] - self.lo[1]) * sy)

    def scale(self) -> float:
        return (self.width - 2 * self.pad) / (self.hi[0] - self.lo[0])

    def rect(self, lo: Sequence[float], hi: Sequence[float], fill: str, stroke: str = "none") -> None:
        x0, y1 = self.px(lo)
        x1, y0 = self.px(hi)
        self.items.append(f'<rect x="{_num(x0)}" y="{_num(y0)}" width="{_num(x1 - x0)}" '
                          f'height="{_num(y1 - y0)}" fill="{fill}" stroke="{stroke}"/>')

    def circle(self, c: Sequence[float], r_world: float, fill: str, stroke: str = "none",
               opacity: float = 1.0) -> None:
        cx, cy = self.px(c)
        self.items.append(f'<circle cx="{_num(cx)}" cy="{_num(cy)}" r="{_num(r_world * self.scale())}" '
                          f'fill="{fill}" stroke="{stroke}" fill-opacity="{_num(opacity)}"/>')

    def dot(self, c: Sequence[float], r_px: float, fill: str) -> None:
        cx, cy = self.px(c)
        self.items.append(f'<circle cx="{_num(cx)}" cy="{_num(cy)}" r="{_num(r_px)}" fill="{fill}"/>')

    def polyline(self, pts: Iterable[Sequence[float]], stroke: str, width: float = 1.5) -> None:
        pts = [self.px(p) for p in pts]
        if len(pts) < 2:
            return
        d = "M" + " L".join(f"{_num(x)},{_num(y)}" for x, y in pts)
        self.items.append(f'<path d="{d}" fill="none" stroke="{stroke}" stroke-width="{_num(width)}"/>')

    def triangle(self, c: Sequence[float], size_px: float = 5.0, fill: str = "black") -> None:
        cx, cy = self.px(c)
        h = size_px
        d = (f"M{_num(cx)},{_num(cy - h)} L{_num(cx - h)},{_num(cy + h)} "
             f"L{_num(cx + h)},{_num(cy + h)} Z")
        self.items.append(f'<path d="{d}" fill="{fill}"/>')

    def star(self, c: Sequence[float], size_px: float = 6.0, fill: str = "black") -> None:
        cx, cy = self.px(c)
        pts = []
        for k in range(10):
            r = size_px if k % 2 == 0 else size_px * 0.45
            a = -math.pi / 2 + k * math.pi / 5
            pts.append((cx + r * math.cos(a), cy + r * math.sin(a)))
        d = "M" + " L".join(f"{_num(x)},{_num(y)}" for x, y in pts) + " Z"
        self.items.append(f'<path d="{d}" fill="{fill}"/>')

    def text(self, p_px: tuple[float, float], s: str, size: int = 12) -> None:
        self.items.append(f'<text x="{_num(p_px[0])}" y="{_num(p_px[1])}" font-size="{size}" '
                          f'font-family="sans-serif">{escape(s)}</text>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{self.width}" '
                f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">')
        frame = (f'<rect x="0" y="0" width="{self.width}" height="{self.height}" '
                 f'fill="white" stroke="none"/>')
        return "\n".join([head, frame, *self.items, "</svg>"]) + "\n"

    def save(self, path) -> None:
        write_atomic(path, self.render())


def write_atomic(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float


def trajectory_figure(lo, hi, paths: Sequence[np.ndarray], labels: Sequence[str] = (),
                      unsafe: Optional[Ball] = None, data: Optional[np.ndarray] = None,
                      triangles: Optional[np.ndarray] = None, stars: Optional[np.ndarray] = None,
                      title: str = "") -> Canvas:
    """Paths over the unsafe ball, with optional data dots, condition-failure
    triangles and acquisition stars. Initial states are drawn as black dots."""
    cv = Canvas(tuple(lo), tuple(hi))
    if unsafe is not None:
        cv.circle(unsafe.center, unsafe.radius, fill="#2ca02c", opacity=0.6)
    if data is not None:
        for p in np.asarray(data).reshape(-1, 2):
            cv.dot(p, 1.5, "#888888")
    for k, path in enumerate(paths):
        path = np.asarray(path)
        if len(path) == 0:
            continue
        color = PALETTE[k % len(PALETTE)]
        cv.polyline(path, color)
        cv.dot(path[0], 4.0, "black")
        if k < len(labels):
            cv.text((cv.width - 150, 20 + 16 * k), labels[k])
            cv.rect(*_legend_box(cv, k), fill=color)
    if triangles is not None:
        for p in np.asarray(triangles).reshape(-1, 2):
            cv.triangle(p)
    if stars is not None:
        for p in np.asarray(stars).reshape(-1, 2):
            cv.star(p)
    if title:
        cv.text((cv.pad, 18), title, size=14)
    return cv


def _legend_box(cv: Canvas, k: int):
    # legend swatch in world coordinates, left of the label
    x, y = cv.width - 165, 10 + 16 * k
    s = cv.scale()
    sy = (cv.height - 2 * cv.pad) / (cv.hi[1] - cv.lo[1])
    lo = (cv.lo[0] + (x - cv.pad) / s, cv.lo[1] + (cv.height - cv.pad - (y + 10)) / sy)
    hi = (cv.lo[0] + (x + 10 - cv.pad) / s, cv.lo[1] + (cv.height - cv.pad - y) / sy)
    return lo, hi


def _diverging(v: float, vmax: float) -> str:
    """Blue for positive, red for negative, white at zero."""
    if not math.isfinite(v):
        return "#7f0000" if v < 0 else "#08306b"
    a = min(abs(v) / vmax, 1.0) if vmax > 0 else 0.0
    c = int(round(255 * (1 - a)))
    return f"#{c:02x}{c:02x}ff" if v > 0 else f"#ff{c:02x}{c:02x}"


def heatmap_figure(lo, hi, points: np.ndarray, values: np.ndarray, cell: Sequence[float],
                   unsafe: Optional[Ball] = None, triangles: Optional[np.ndarray] = None,
                   title: str = "") -> Canvas:
    """One coloured cell per grid point; ``triangles`` mark where a condition fails."""
    cv = Canvas(tuple(lo), tuple(hi))
    vals = np.asarray(values, dtype=float)
    fin = np.abs(vals[np.isfinite(vals)])
    vmax = float(np.percentile(fin, 95)) if fin.size else 1.0
    half = np.asarray(cell, dtype=float) / 2
    for p, v in zip(np.asarray(points), vals):
        cv.rect(p - half, p + half, fill=_diverging(v, vmax))
    if unsafe is not None:
        cv.circle(unsafe.center, unsafe.radius, fill="#2ca02c", opacity=0.6)
    if triangles is not None:
        for p in np.asarray(triangles).reshape(-1, 2):
            cv.triangle(p, size_px=2.5)
    if title:
        cv.text((cv.pad, 18), title, size=14)
    return cv
