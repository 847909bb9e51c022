"""Minimal polyline plots written as plain SVG text."""

from __future__ import annotations

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v):
    return f"{v:.6g}"


def line_plot(series, title="", xlabel="", ylabel="", logx=False, logy=False, header="", width=480, height=360):
    """SVG document for ``series`` = [(label, x, y), ...].

    Non-positive values are dropped on log axes. ``header`` is embedded as
    an XML comment.
    """
    pad_l, pad_r, pad_t, pad_b = 70, 20, 30, 50
    pts = []
    for label, x, y in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logx:
            ok &= x > 0
        if logy:
            ok &= y > 0
        x, y = x[ok], y[ok]
        pts.append((label, np.log10(x) if logx else x, np.log10(y) if logy else y))
    xs = np.concatenate([p[1] for p in pts]) if pts else np.zeros(0)
    ys = np.concatenate([p[2] for p in pts]) if pts else np.zeros(0)
    if xs.size == 0:
        xs = ys = np.array([0.0, 1.0])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw = width - pad_l - pad_r
    ph = height - pad_t - pad_b

    def sx(v):
        return pad_l + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return pad_t + (1 - (v - y0) / (y1 - y0)) * ph

    out = ['<?xml version="1.0" encoding="UTF-8"?>\n']
    if header:
        out.append("<!--\n" + header.replace("--", "- -") + "-->\n")
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">\n')
    out.append(f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>\n')
    for frac in (0.0, 0.5, 1.0):
        vx = x0 + frac * (x1 - x0)
        vy = y0 + frac * (y1 - y0)
        lx = f"1e{_fmt(vx)}" if logx else _fmt(vx)
        ly = f"1e{_fmt(vy)}" if logy else _fmt(vy)
        out.append(f'<text x="{_fmt(sx(vx))}" y="{height - pad_b + 15}" text-anchor="middle">{lx}</text>\n')
        out.append(f'<text x="{pad_l - 5}" y="{_fmt(sy(vy) + 4)}" text-anchor="end">{ly}</text>\n')
    out.append(f'<text x="{width / 2}" y="{pad_t - 10}" text-anchor="middle">{_escape(title)}</text>\n')
    out.append(f'<text x="{pad_l + pw / 2}" y="{height - 10}" text-anchor="middle">{_escape(xlabel)}</text>\n')
    out.append(f'<text x="15" y="{pad_t + ph / 2}" transform="rotate(-90 15 {pad_t + ph / 2})" text-anchor="middle">{_escape(ylabel)}</text>\n')
    for i, (label, x, y) in enumerate(pts):
        color = _COLORS[i % len(_COLORS)]
        coords = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x, y))
        if coords:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>\n')
        out.append(f'<text x="{pad_l + 8}" y="{pad_t + 14 * (i + 1)}" fill="{color}">{_escape(label)}</text>\n')
    out.append("</svg>\n")
    return "".join(out)


def _escape(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def loglog(series, **kw):
    return line_plot(series, logx=True, logy=True, **kw)
