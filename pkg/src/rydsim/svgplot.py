"""Hand-rolled SVG line plots: polyline, markers, and text primitives only.

Output is deterministic except for one timestamp comment line near the top.
"""

from __future__ import annotations

import math
from datetime import datetime, timezone

__all__ = ["LinePlot"]

_COLORS = ("#1f6fb2", "#d1495b", "#2e8b57", "#8c6bb1", "#e08214", "#555555")

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 70, 20, 40, 55    # plot margins


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / n))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-12 * span:
        out.append(t)
        t += step
    return out


class LinePlot:
    """Accumulates series and annotations, then renders one SVG file."""

    def __init__(self, title: str, xlabel: str, ylabel: str):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.series = []     # (label, xs, ys, draw_line, draw_markers)
        self.notes = []      # free-floating text lines under the title

    def add_series(self, label, xs, ys, line=True, markers=True):
        xs = [float(x) for x in xs]
        ys = [float(y) for y in ys]
        if len(xs) != len(ys):
            raise ValueError("x and y lengths differ")
        self.series.append((label, xs, ys, line, markers))

    def add_note(self, text: str):
        self.notes.append(text)

    def _bounds(self):
        xs = [x for _, sx, _, _, _ in self.series for x in sx]
        ys = [y for _, _, sy, _, _ in self.series for y in sy]
        if not xs:
            return 0.0, 1.0, 0.0, 1.0
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        padx = 0.04 * (x1 - x0)
        pady = 0.08 * (y1 - y0)
        return x0 - padx, x1 + padx, y0 - pady, y1 + pady

    def render(self) -> str:
        x0, x1, y0, y1 = self._bounds()

        def px(x):
            return _ML + (x - x0) / (x1 - x0) * (_W - _ML - _MR)

        def py(y):
            return _H - _MB - (y - y0) / (y1 - y0) * (_H - _MT - _MB)

        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}" font-family="sans-serif">',
            f"<!-- generated {datetime.now(timezone.utc).isoformat()} -->",
            f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
            f'<text x="{_W // 2}" y="22" text-anchor="middle" font-size="15">{self.title}</text>',
        ]
        for i, note in enumerate(self.notes):
            parts.append(f'<text x="{_ML + 8}" y="{_MT + 14 + 14 * i}" '
                         f'font-size="11" fill="#333333">{note}</text>')
        # axes
        parts.append(f'<polyline fill="none" stroke="black" points='
                     f'"{_fmt(_ML)},{_fmt(_MT)} {_fmt(_ML)},{_fmt(_H - _MB)} '
                     f'{_fmt(_W - _MR)},{_fmt(_H - _MB)}"/>')
        for t in _ticks(x0, x1):
            parts.append(f'<polyline stroke="black" fill="none" points='
                         f'"{_fmt(px(t))},{_fmt(_H - _MB)} {_fmt(px(t))},{_fmt(_H - _MB + 5)}"/>')
            parts.append(f'<text x="{_fmt(px(t))}" y="{_H - _MB + 18}" '
                         f'text-anchor="middle" font-size="11">{t:g}</text>')
        for t in _ticks(y0, y1):
            parts.append(f'<polyline stroke="black" fill="none" points='
                         f'"{_fmt(_ML - 5)},{_fmt(py(t))} {_fmt(_ML)},{_fmt(py(t))}"/>')
            parts.append(f'<text x="{_ML - 8}" y="{_fmt(py(t) + 4)}" '
                         f'text-anchor="end" font-size="11">{t:g}</text>')
        parts.append(f'<text x="{(_ML + _W - _MR) // 2}" y="{_H - 15}" '
                     f'text-anchor="middle" font-size="13">{self.xlabel}</text>')
        parts.append(f'<text x="18" y="{(_MT + _H - _MB) // 2}" text-anchor="middle" '
                     f'font-size="13" transform="rotate(-90 18 {(_MT + _H - _MB) // 2})">'
                     f'{self.ylabel}</text>')
        # series + legend
        for i, (label, xs, ys, line, markers) in enumerate(self.series):
            color = _COLORS[i % len(_COLORS)]
            pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs, ys))
            if line and len(xs) > 1:
                parts.append(f'<polyline fill="none" stroke="{color}" '
                             f'stroke-width="1.5" points="{pts}"/>')
            if markers:
                for x, y in zip(xs, ys):
                    parts.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" '
                                 f'r="2.5" fill="{color}"/>')
            ly = _MT + 14 + 14 * (len(self.notes) + i)
            lx = _W - _MR - 160
            parts.append(f'<polyline stroke="{color}" stroke-width="2" fill="none" '
                         f'points="{lx},{ly - 4} {lx + 18},{ly - 4}"/>')
            parts.append(f'<text x="{lx + 24}" y="{ly}" font-size="11">{label}</text>')
        parts.append("</svg>")
        return "\n".join(parts) + "\n"

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())
