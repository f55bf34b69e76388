"""Self-contained SVG line plots (no plotting library needed)."""
from __future__ import annotations

import math
from html import escape
from pathlib import Path

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf", "#d62728")

W, H = 720, 420
ML, MR, MT, MB = 70, 150, 40, 55


def _ticks(lo, hi, n=6):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def _fmt(v):
    return f"{v:.4g}"


def line_plot(series, title="", xlabel="", ylabel="", rects=(), logy=False) -> str:
    """Render ``series`` (iterable of ``(label, xs, ys)``) to an SVG string.

    ``rects`` are ``(x0, y0, x1, y1)`` boxes in data coordinates drawn in red.
    """
    series = [(lbl, np.asarray(xs, float), np.asarray(ys, float)) for lbl, xs, ys in series]
    series = [s for s in series if len(s[1])]
    if not series:
        raise ValueError("nothing to plot")
    tf = (lambda v: np.log10(np.maximum(v, 1e-300))) if logy else (lambda v: v)
    xs_all = np.concatenate([s[1] for s in series] + [np.array([r[0], r[2]]) for r in rects])
    ys_all = np.concatenate([tf(s[2]) for s in series] + [np.array([r[1], r[3]]) for r in rects])
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 == x0:
        x1 = x0 + 1.0
    pad = 0.05 * (y1 - y0 or 1.0)
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = W - ML - MR, H - MT - MB

    def px(x):
        return ML + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MT + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.2f}" y1="{MT}" x2="{px(t):.2f}" y2="{MT + ph}" '
                   f'stroke="#eee"/>')
        out.append(f'<text x="{px(t):.2f}" y="{MT + ph + 16}" text-anchor="middle">{_fmt(t)}'
                   f'</text>')
    for t in _ticks(y0, y1):
        label = _fmt(10 ** t) if logy else _fmt(t)
        out.append(f'<line x1="{ML}" y1="{py(t):.2f}" x2="{ML + pw}" y2="{py(t):.2f}" '
                   f'stroke="#eee"/>')
        out.append(f'<text x="{ML - 6}" y="{py(t) + 4:.2f}" text-anchor="end">{label}</text>')
    out.append(f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>')
    for rx0, ry0, rx1, ry1 in rects:
        out.append(f'<rect x="{px(rx0):.2f}" y="{py(max(ry0, ry1)):.2f}" '
                   f'width="{px(rx1) - px(rx0):.2f}" height="{abs(py(ry0) - py(ry1)):.2f}" '
                   f'fill="none" stroke="#d62728" stroke-width="2"/>')
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, tf(ys)))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.4"/>')
        if i < 20:
            ly = MT + 14 * i + 8
            out.append(f'<line x1="{W - MR + 10}" y1="{ly}" x2="{W - MR + 28}" y2="{ly}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{W - MR + 32}" y="{ly + 4}">{escape(str(label))}</text>')
    out.append(f'<text x="{ML + pw / 2}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}'
               f'</text>')
    out.append(f'<text transform="translate(16 {MT + ph / 2}) rotate(-90)" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cone_rects(course) -> list:
    """One rectangle per cone set, one lane wide."""
    half = course.lane_width / 2
    return [(cs.x_start, course.lane_y(cs.lane) - half, cs.x_end, course.lane_y(cs.lane) + half)
            for cs in course.cone_sets]


def path_plot(tables, rects=(), title="Paths") -> str:
    return line_plot([(t.name, t["x"], t["y"]) for t in tables], title, "x (m)", "y (m)", rects)


def steering_plot(tables, title="Steering-wheel angle") -> str:
    return line_plot([(t.name, t["t"], t["wheel_angle"]) for t in tables], title, "time (s)",
                     "wheel angle (rad)")


def speed_plot(tables, title="Speed") -> str:
    return line_plot([(t.name, t["t"], t["speed_kmh"]) for t in tables], title, "time (s)",
                     "speed (km/h)")


def loss_plot(train_mse, val_mse=(), title="Training loss") -> str:
    epochs = np.arange(1, len(train_mse) + 1)
    series = [("train MSE", epochs, train_mse)]
    if len(val_mse):
        series.append(("validation MSE", epochs, val_mse))
    return line_plot(series, title, "epoch", "MSE", logy=True)


def write_svg(path, svg: str) -> None:
    Path(path).write_text(svg)
