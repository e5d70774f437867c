"""Minimal deterministic SVG line charts.

Runs are inspected without any plotting package: each panel is a set of
polylines on a shared time axis, optionally with a horizontal reference
line (the detection threshold).  Coordinates are rounded so identical data
always gives identical bytes.
"""

import math
from pathlib import Path

import numpy as np

PALETTE = ("#222222", "#1f77b4", "#d62728", "#2ca02c", "#9467bd")
WIDTH, PANEL_H = 720, 220
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 28, 30


def _fmt(v):
    return f"{v:.2f}"


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= n:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    return [first + i * step for i in range(int((hi - first) / step + 1e-9) + 1)]


def _panel(parts, top, t, series, title, ylabel, hline):
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = top + MARGIN_T, top + PANEL_H - MARGIN_B
    finite = [np.asarray(v, dtype=float) for v in series.values()]
    vals = np.concatenate([v[np.isfinite(v)] for v in finite] + ([np.array([hline])] if hline is not None else []))
    lo, hi = (float(vals.min()), float(vals.max())) if vals.size else (0.0, 1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    t = np.asarray(t, dtype=float)
    t_lo, t_hi = float(t[0]), float(t[-1]) if t[-1] > t[0] else float(t[0]) + 1.0

    def sx(v):
        return x0 + (v - t_lo) / (t_hi - t_lo) * (x1 - x0)

    def sy(v):
        return y1 - (v - lo) / (hi - lo) * (y1 - y0)

    parts.append(f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" fill="none" stroke="#888"/>')
    parts.append(f'<text x="{x0}" y="{top + 18}" font-size="13">{title}</text>')
    parts.append(f'<text x="12" y="{_fmt((y0 + y1) / 2)}" font-size="11">{ylabel}</text>')
    for tick in _ticks(lo, hi, 4):
        parts.append(f'<text x="{x0 - 4}" y="{_fmt(sy(tick) + 4)}" font-size="10" text-anchor="end">{tick:.4g}</text>')
    for tick in _ticks(t_lo, t_hi, 10):
        parts.append(f'<text x="{_fmt(sx(tick))}" y="{y1 + 14}" font-size="10" text-anchor="middle">{tick:g}</text>')
    if hline is not None:
        parts.append(f'<line x1="{x0}" x2="{x1}" y1="{_fmt(sy(hline))}" y2="{_fmt(sy(hline))}" '
                     'stroke="#ff7f0e" stroke-dasharray="6,4"/>')
    for i, (name, v) in enumerate(series.items()):
        v = np.asarray(v, dtype=float)
        n = min(len(v), len(t))
        pts = " ".join(f"{_fmt(sx(t[k]))},{_fmt(sy(v[k]))}" for k in range(n) if math.isfinite(v[k]))
        color = PALETTE[i % len(PALETTE)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        parts.append(f'<text x="{x1 - 110}" y="{y0 + 14 + 13 * i}" font-size="11" fill="{color}">{name}</text>')


def write_panels(path, t, panels):
    """Write stacked panels to ``path``.

    ``panels`` is a list of dicts with keys ``series`` (name -> values),
    ``title`` and optionally ``ylabel`` and ``hline``.
    """
    parts = []
    for i, panel in enumerate(panels):
        _panel(parts, i * PANEL_H, t, panel["series"], panel["title"],
               panel.get("ylabel", ""), panel.get("hline"))
    height = PANEL_H * len(panels)
    body = "\n".join(parts)
    svg = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
           f'viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">\n{body}\n</svg>\n')
    Path(path).write_text(svg)
