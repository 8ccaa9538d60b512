"""Dependency-free SVG renderings of gear traces and motor working points.

Output is plain text with fixed-precision coordinates, so identical data
gives byte-identical files.
"""

from __future__ import annotations

import numpy as np

COLORS = {"rule_based": "#7f7f7f", "exact": "#1f77b4", "nn": "#d62728"}
FALLBACK = ("#2ca02c", "#9467bd", "#8c564b")


def _color(method: str, i: int) -> str:
    return COLORS.get(method, FALLBACK[i % len(FALLBACK)])


def _fmt(x: float) -> str:
    return f"{x:.2f}"


class _Axes:
    """Linear map from data coordinates to a pixel rectangle."""

    def __init__(self, x0, y0, w, h, xlim, ylim):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim = xlim
        self.ylim = ylim if ylim[1] > ylim[0] else (ylim[0] - 1.0, ylim[0] + 1.0)

    def px(self, x):
        lo, hi = self.xlim
        return self.x0 + (np.asarray(x, float) - lo) / (hi - lo) * self.w

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 + self.h - (np.asarray(y, float) - lo) / (hi - lo) * self.h

    def frame(self, title, xlabel, ylabel) -> list[str]:
        y1 = self.y0 + self.h
        out = [
            f'<rect x="{_fmt(self.x0)}" y="{_fmt(self.y0)}" width="{_fmt(self.w)}" height="{_fmt(self.h)}" '
            'fill="none" stroke="#000" stroke-width="0.8"/>',
            f'<text x="{_fmt(self.x0)}" y="{_fmt(self.y0 - 6)}" font-size="12">{title}</text>',
            f'<text x="{_fmt(self.x0 + self.w / 2)}" y="{_fmt(y1 + 30)}" font-size="11" '
            f'text-anchor="middle">{xlabel}</text>',
            f'<text x="{_fmt(self.x0 - 38)}" y="{_fmt(self.y0 + self.h / 2)}" font-size="11" '
            f'text-anchor="middle" transform="rotate(-90 {_fmt(self.x0 - 38)} {_fmt(self.y0 + self.h / 2)})">'
            f"{ylabel}</text>",
        ]
        for val, anchor in ((self.xlim[0], "start"), (self.xlim[1], "end")):
            out.append(f'<text x="{_fmt(self.px(val))}" y="{_fmt(y1 + 14)}" font-size="10" '
                       f'text-anchor="{anchor}">{val:g}</text>')
        for val in self.ylim:
            out.append(f'<text x="{_fmt(self.x0 - 4)}" y="{_fmt(self.py(val) + 4)}" font-size="10" '
                       f'text-anchor="end">{val:.4g}</text>')
        return out

    def polyline(self, x, y, color, width=1.0) -> str:
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(self.px(x), self.py(y)))
        return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>'


def _document(width, height, body) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="#fff"/>', *body, "</svg>"]) + "\n"


def _legend(methods, x, y) -> list[str]:
    out = []
    for i, m in enumerate(methods):
        yy = y + 14 * i
        out.append(f'<line x1="{x}" y1="{yy}" x2="{x + 18}" y2="{yy}" stroke="{_color(m, i)}" stroke-width="2"/>')
        out.append(f'<text x="{x + 22}" y="{yy + 4}" font-size="10">{m}</text>')
    return out


def gear_trace_svg(t, v_kmh, gears: dict) -> str:
    """Speed on top, one step trace of the gear per method below."""
    t = np.asarray(t, float)
    W, H = 960, 200 + 90 * len(gears)
    xlim = (float(t[0]), float(t[-1]))
    body = []
    ax = _Axes(70, 30, W - 190, 130, xlim, (0.0, float(np.max(v_kmh)) if len(v_kmh) else 1.0))
    body += ax.frame("reference speed", "time [s]", "km/h")
    body.append(ax.polyline(t, v_kmh, "#000"))
    # steps drawn as horizontal-then-vertical segments
    ts = np.repeat(t, 2)[1:]
    for i, (method, g) in enumerate(gears.items()):
        g = np.asarray(g, float)
        gs = np.repeat(g, 2)[:-1]
        lo, hi = float(np.min(g)) - 0.3, float(np.max(g)) + 0.3
        axg = _Axes(70, 200 + 90 * i, W - 190, 55, xlim, (min(lo, 0.7), max(hi, 2.3)))
        body += axg.frame(f"gear: {method}", "time [s]" if i == len(gears) - 1 else "", "gear")
        body.append(axg.polyline(ts, gs, _color(method, i), 1.2))
    body += _legend(list(gears), W - 105, 40)
    return _document(W, H, body)


def working_points_svg(points: dict, T_max: float, n_max: float) -> str:
    """Scatter of (motor speed, torque) per method; dot opacity follows efficiency."""
    W, H = 330 * max(len(points), 1) + 40, 330
    body = []
    for i, (method, (n, T, eta)) in enumerate(points.items()):
        ax = _Axes(70 + 330 * i, 30, 250, 250, (0.0, float(n_max)), (-float(T_max), float(T_max)))
        body += ax.frame(method, "motor speed [rpm]", "torque [N m]")
        zero = ax.py(0.0)
        body.append(f'<line x1="{_fmt(ax.x0)}" y1="{_fmt(zero)}" x2="{_fmt(ax.x0 + ax.w)}" y2="{_fmt(zero)}" '
                    'stroke="#bbb" stroke-width="0.5"/>')
        color = _color(method, i)
        for x, y, e in zip(ax.px(n), ax.py(T), np.asarray(eta, float)):
            body.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="1.6" fill="{color}" '
                        f'fill-opacity="{0.15 + 0.85 * e:.2f}"/>')
    return _document(W, H, body)
