"""Minimal hand-written SVG charts: metric-vs-lambda lines and per-instance views."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return out_lo + (np.asarray(values, dtype=np.float64) - lo) / span * (out_hi - out_lo)


def _polyline(xs, ys, color, dashed=False, width=1.5) -> str:
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(xs, ys))
    dash = ' stroke-dasharray="4 3"' if dashed else ""
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}"{dash} points="{pts}"/>'


def _text(x, y, s, size=12, anchor="start") -> str:
    return f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" font-family="sans-serif" text-anchor="{anchor}">{escape(str(s))}</text>'


def line_chart(xvals, series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
               width: int = 520, height: int = 340) -> str:
    """One polyline per entry of ``series``, each sharing ``xvals``."""
    left, right, top, bottom = 60, width - 130, 30, height - 45
    xvals = np.asarray(xvals, dtype=np.float64)
    allys = np.concatenate([np.asarray(v, dtype=np.float64) for v in series.values()]) if series else np.zeros(1)
    ylo, yhi = float(allys.min()), float(allys.max())
    if ylo == yhi:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    xs = _scale(xvals, xvals.min(), xvals.max(), left, right)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             '<rect width="100%" height="100%" fill="white"/>',
             f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
             f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>',
             _text(width / 2, 18, title, 14, "middle"),
             _text((left + right) / 2, height - 8, xlabel, 12, "middle"),
             _text(12, (top + bottom) / 2, ylabel, 12)]
    for v in (ylo, yhi):
        parts.append(_text(left - 5, _scale(v, ylo, yhi, bottom, top) + 4, f"{v:.3g}", 10, "end"))
    for xv, px in zip(xvals, xs):
        parts.append(_text(px, bottom + 14, f"{xv:g}", 10, "middle"))
    for i, (name, ys) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        parts.append(_polyline(xs, _scale(ys, ylo, yhi, bottom, top), color))
        ly = top + 16 * i + 6
        parts.append(f'<line x1="{right + 10}" y1="{ly}" x2="{right + 28}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(_text(right + 32, ly + 4, name, 11))
    parts.append("</svg>")
    return "\n".join(parts)


def _heat(v: float) -> str:
    # white (0) -> dark red (1)
    v = float(np.clip(v, 0.0, 1.0))
    g = int(round(255 * (1 - v)))
    return f"rgb(255,{g},{g})" if v < 0.5 else f"rgb({int(round(255 - 110 * (v - 0.5) * 2))},{g},{g})"


def instance_plot(x, nun, cf, theta, title: str = "", width: int = 640, height: int = 300) -> str:
    """Query, nearest unlike neighbour and counterfactual, with a saliency strip below."""
    x, nun, cf, theta = (np.asarray(a, dtype=np.float64) for a in (x, nun, cf, theta))
    T = x.size
    left, right, top, bottom = 40, width - 110, 28, height - 60
    strip_top, strip_h = bottom + 12, 18
    lo = float(min(x.min(), nun.min(), cf.min()))
    hi = float(max(x.max(), nun.max(), cf.max()))
    ts = _scale(np.arange(T), 0, T - 1, left, right)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             '<rect width="100%" height="100%" fill="white"/>',
             _text(width / 2, 18, title, 14, "middle")]
    for name, series, color, dashed in (("x", x, PALETTE[0], False), ("nun", nun, "#7f7f7f", True),
                                        ("x'", cf, PALETTE[1], False)):
        parts.append(_polyline(ts, _scale(series, lo, hi, bottom, top), color, dashed))
    for i, (name, color) in enumerate((("x", PALETTE[0]), ("nun", "#7f7f7f"), ("x'", PALETTE[1]))):
        ly = top + 16 * i + 6
        parts.append(f'<line x1="{right + 10}" y1="{ly}" x2="{right + 28}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(_text(right + 32, ly + 4, name, 11))
    cell = (right - left) / T
    for t in range(T):
        parts.append(f'<rect x="{left + t * cell:.2f}" y="{strip_top}" width="{cell + 0.05:.2f}" '
                     f'height="{strip_h}" fill="{_heat(theta[t])}"/>')
    parts.append(f'<rect x="{left}" y="{strip_top}" width="{right - left}" height="{strip_h}" fill="none" stroke="black"/>')
    parts.append(_text(right + 10, strip_top + 13, "saliency", 11))
    parts.append("</svg>")
    return "\n".join(parts)
