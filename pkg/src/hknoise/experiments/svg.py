"""Minimal SVG line charts of a series on the unit interval."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 800, 400
MAX_POINTS = 4000
_PAD_L, _PAD_R, _PAD_T, _PAD_B = 60, 20, 30, 40
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def thin(t: np.ndarray, y: np.ndarray, max_points: int = MAX_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """Keep at most ``max_points`` samples, preserving each bucket's min and max."""
    t = np.asarray(t)
    y = np.asarray(y)
    if y.size <= max_points:
        return t, y
    buckets = max_points // 2
    edges = np.linspace(0, y.size, buckets + 1).astype(np.int64)
    keep = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        seg = y[a:b]
        i, j = a + int(np.argmin(seg)), a + int(np.argmax(seg))
        keep.extend(sorted({i, j}))
    idx = np.asarray(keep)
    return t[idx], y[idx]


def _sx(t, t0, t1):
    span = (t1 - t0) or 1
    return _PAD_L + (np.asarray(t, dtype=np.float64) - t0) / span * (WIDTH - _PAD_L - _PAD_R)


def _sy(y):
    return _PAD_T + (1.0 - np.asarray(y, dtype=np.float64)) * (HEIGHT - _PAD_T - _PAD_B)


def line_chart(
    t,
    series: dict[str, np.ndarray] | np.ndarray,
    title: str = "",
    guides: dict[str, float] | None = None,
    ylabel: str = "d(t)",
) -> str:
    """Render one or more series against ``t`` on a fixed 800x400 canvas with y in [0, 1]."""
    t = np.asarray(t)
    if not isinstance(series, dict):
        series = {ylabel: series}
    t0, t1 = float(t[0]), float(t[-1])
    inner_w = WIDTH - _PAD_L - _PAD_R
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
    ]
    x_axis_y = _sy(0.0)
    out.append(f'<line x1="{_PAD_L}" y1="{x_axis_y:.2f}" x2="{WIDTH - _PAD_R}" y2="{x_axis_y:.2f}" stroke="black"/>')
    out.append(f'<line x1="{_PAD_L}" y1="{_sy(1.0):.2f}" x2="{_PAD_L}" y2="{x_axis_y:.2f}" stroke="black"/>')
    for v in (0.0, 0.25, 0.5, 0.75, 1.0):
        out.append(
            f'<text x="{_PAD_L - 6}" y="{_sy(v) + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{v:g}</text>'
        )
    for v in np.linspace(t0, t1, 5):
        out.append(
            f'<text x="{_sx(v, t0, t1):.2f}" y="{HEIGHT - _PAD_B + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{v:.4g}</text>'
        )
    out.append(
        f'<text x="{_PAD_L + inner_w / 2}" y="{HEIGHT - 6}" text-anchor="middle" font-family="sans-serif" font-size="12">t</text>'
    )
    for label, level in (guides or {}).items():
        if 0.0 <= level <= 1.0:
            y = _sy(level)
            out.append(
                f'<line x1="{_PAD_L}" y1="{y:.2f}" x2="{WIDTH - _PAD_R}" y2="{y:.2f}" stroke="gray" stroke-dasharray="6,4"/>'
            )
            out.append(
                f'<text x="{WIDTH - _PAD_R - 4}" y="{y - 4:.2f}" text-anchor="end" font-family="sans-serif" '
                f'font-size="11" fill="gray">{escape(label)}</text>'
            )
    per_series = max(MAX_POINTS // max(len(series), 1), 2)
    for k, (label, y) in enumerate(series.items()):
        tt, yy = thin(t, np.asarray(y), per_series)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(_sx(tt, t0, t1), _sy(yy)))
        color = _PALETTE[k % len(_PALETTE)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{pts}"><title>{escape(label)}</title></polyline>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
