"""Minimal deterministic SVG line charts.

Only what the reports need: lines, shaded bands, scatter points, axes with
tick labels and a legend.  Output depends only on the inputs, so identical
data produce identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    """Round tick positions covering [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("tick range must be finite")
    if hi <= lo:
        hi = lo + (abs(lo) if lo else 1.0)
    raw = (hi - lo) / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t = first + len(ticks) * step
    return ticks


def _tick_label(v: float, step: float) -> str:
    """Fewest decimals (at most 6) that represent the tick step exactly."""
    decimals = next((d for d in range(7) if abs(round(step, d) - step) <= 1e-9 * step), 6)
    return f"{v:.{decimals}f}"


def _fmt(v: float) -> str:
    return f"{v:.2f}"


@dataclass
class _Series:
    kind: str  # line | band | scatter
    x: np.ndarray
    y: np.ndarray
    y2: np.ndarray | None
    color: str
    label: str
    width: float = 1.5
    opacity: float = 1.0
    radius: float = 1.8


@dataclass
class Chart:
    """A single-panel x/y chart.

    Examples
    --------
    >>> c = Chart(title="demo", xlabel="t", ylabel="y")
    >>> c.line([0, 1, 2], [0, 1, 4], label="f")
    >>> svg = c.render()
    """

    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    width: int = 640
    height: int = 360
    series: list[_Series] = field(default_factory=list)

    def _color(self, color):
        return color or PALETTE[len(self.series) % len(PALETTE)]

    def line(self, x, y, label: str = "", color: str | None = None, width: float = 1.5):
        self.series.append(_Series("line", _arr(x), _arr(y), None, self._color(color), label,
                                   width=width))

    def band(self, x, lo, hi, label: str = "", color: str | None = None, opacity: float = 0.25):
        self.series.append(_Series("band", _arr(x), _arr(lo), _arr(hi), self._color(color),
                                   label, opacity=opacity))

    def scatter(self, x, y, label: str = "", color: str | None = None, radius: float = 1.8):
        self.series.append(_Series("scatter", _arr(x), _arr(y), None, self._color(color), label,
                                   radius=radius))

    def _limits(self):
        xs = np.concatenate([s.x for s in self.series])
        ys = np.concatenate([s.y for s in self.series] +
                            [s.y2 for s in self.series if s.y2 is not None])
        return float(xs.min()), float(xs.max()), float(ys.min()), float(ys.max())

    def render(self) -> str:
        if not self.series:
            raise ValueError("chart has no series")
        for s in self.series:
            if not (np.all(np.isfinite(s.x)) and np.all(np.isfinite(s.y))):
                raise ValueError(f"series {s.label!r} has non-finite values")
        x0, x1, y0, y1 = self._limits()
        if y1 - y0 <= 0:
            pad = abs(y0) * 0.1 or 1.0
            y0, y1 = y0 - pad, y1 + pad
        if x1 - x0 <= 0:
            x0, x1 = x0 - 1.0, x1 + 1.0
        xt, yt = nice_ticks(x0, x1), nice_ticks(y0, y1)
        y0, y1 = min(y0, yt[0]), max(y1, yt[-1])
        left, right, top, bottom = 64, 16, 32 if self.title else 12, 44
        pw, ph = self.width - left - right, self.height - top - bottom

        def px(v):
            return left + (np.asarray(v) - x0) / (x1 - x0) * pw

        def py(v):
            return top + (1.0 - (np.asarray(v) - y0) / (y1 - y0)) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}" '
            'font-family="sans-serif" font-size="11">',
            f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="white"/>',
        ]
        if self.title:
            out.append(f'<text x="{self.width / 2:.1f}" y="18" text-anchor="middle" '
                       f'font-size="13">{escape(self.title)}</text>')
        out.append(f'<defs><clipPath id="plot"><rect x="{left}" y="{top}" width="{pw}" '
                   f'height="{ph}"/></clipPath></defs>')
        xstep = xt[1] - xt[0] if len(xt) > 1 else 1.0
        ystep = yt[1] - yt[0] if len(yt) > 1 else 1.0
        for t in xt:
            if x0 <= t <= x1:
                X = _fmt(px(t))
                out.append(f'<line x1="{X}" y1="{top}" x2="{X}" y2="{top + ph}" '
                           'stroke="#e5e5e5"/>')
                out.append(f'<text x="{X}" y="{top + ph + 16}" text-anchor="middle">'
                           f'{_tick_label(t, xstep)}</text>')
        for t in yt:
            Y = _fmt(py(t))
            out.append(f'<line x1="{left}" y1="{Y}" x2="{left + pw}" y2="{Y}" stroke="#e5e5e5"/>')
            out.append(f'<text x="{left - 6}" y="{Y}" text-anchor="end" dominant-baseline="middle">'
                       f'{_tick_label(t, ystep)}</text>')
        out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" '
                   'stroke="#444"/>')
        out.append('<g clip-path="url(#plot)">')
        for s in self.series:
            if s.kind == "band":
                upper = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px(s.x), py(s.y2)))
                lower = " ".join(f"{_fmt(a)},{_fmt(b)}"
                                 for a, b in zip(px(s.x[::-1]), py(s.y[::-1])))
                out.append(f'<polygon points="{upper} {lower}" fill="{s.color}" '
                           f'fill-opacity="{s.opacity}" stroke="none"/>')
            elif s.kind == "line":
                pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px(s.x), py(s.y)))
                out.append(f'<polyline points="{pts}" fill="none" stroke="{s.color}" '
                           f'stroke-width="{s.width}"/>')
            else:
                for a, b in zip(px(s.x), py(s.y)):
                    out.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="{s.radius}" '
                               f'fill="{s.color}"/>')
        out.append("</g>")
        if self.xlabel:
            out.append(f'<text x="{left + pw / 2:.1f}" y="{self.height - 8}" '
                       f'text-anchor="middle">{escape(self.xlabel)}</text>')
        if self.ylabel:
            out.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
                       f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(self.ylabel)}</text>')
        labelled = [s for s in self.series if s.label]
        for i, s in enumerate(labelled):
            ly = top + 14 + 14 * i
            out.append(f'<rect x="{left + 8}" y="{ly - 8}" width="12" height="8" fill="{s.color}" '
                       f'fill-opacity="{max(s.opacity, 0.5)}"/>')
            out.append(f'<text x="{left + 24}" y="{ly}">{escape(s.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _arr(v) -> np.ndarray:
    return np.asarray(v, dtype=float).ravel()
