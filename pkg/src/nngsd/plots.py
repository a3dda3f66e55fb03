"""Self-contained SVG line plots (time on x, angle or verdict on y)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f")

_W, _H = 720, 400
_ML, _MR, _MT, _MB = 64, 16, 36, 44


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


def render_line_svg(path: str | Path, x: np.ndarray,
                    series: Sequence[tuple[str, np.ndarray]],
                    title: str = "", y_label: str = "", x_label: str = "t [s]") -> None:
    x = np.asarray(x, dtype=float)
    ys = [np.asarray(y, dtype=float) for _, y in series]
    x_lo, x_hi = float(np.min(x)), float(np.max(x))
    y_lo = min(float(np.min(y)) for y in ys)
    y_hi = max(float(np.max(y)) for y in ys)
    if y_hi <= y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    span_x = x_hi - x_lo if x_hi > x_lo else 1.0

    def px(v):
        return _ML + (v - x_lo) / span_x * (_W - _ML - _MR)

    def py(v):
        return _H - _MB - (v - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="20" text-anchor="middle" font-size="13">{title}</text>',
    ]
    for tv in _ticks(x_lo, x_hi):
        parts.append(f'<line x1="{px(tv):.1f}" y1="{_H - _MB}" x2="{px(tv):.1f}" '
                     f'y2="{_H - _MB + 4}" stroke="black"/>')
        parts.append(f'<text x="{px(tv):.1f}" y="{_H - _MB + 16}" '
                     f'text-anchor="middle">{tv:.3g}</text>')
    for tv in _ticks(y_lo, y_hi):
        parts.append(f'<line x1="{_ML - 4}" y1="{py(tv):.1f}" x2="{_ML}" '
                     f'y2="{py(tv):.1f}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{py(tv) + 4:.1f}" '
                     f'text-anchor="end">{tv:.3g}</text>')
    parts.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>')
    parts.append(f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
                 f'stroke="black"/>')
    parts.append(f'<text x="{_W / 2:.0f}" y="{_H - 8}" text-anchor="middle">{x_label}</text>')
    if y_label:
        parts.append(f'<text x="14" y="{_H / 2:.0f}" text-anchor="middle" '
                     f'transform="rotate(-90 14 {_H / 2:.0f})">{y_label}</text>')
    for i, ((label, _), y) in enumerate(zip(series, ys)):
        color = _PALETTE[i % len(_PALETTE)]
        points = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x, y))
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" '
                     f'stroke-width="1.2"/>')
        parts.append(f'<text x="{_W - _MR - 4}" y="{_MT + 14 * (i + 1)}" '
                     f'text-anchor="end" fill="{color}">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
