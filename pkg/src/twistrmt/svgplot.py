"""Minimal SVG line plots and heatmaps.  CSV output stays authoritative."""
from __future__ import annotations

import math
from html import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = (70, 20, 30, 50)  # left, right, top, bottom
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


class _Axes:
    def __init__(self, xlim, ylim, logx=False, logy=False):
        self.logx, self.logy = logx, logy
        self.x0, self.x1 = self._t(xlim[0], logx), self._t(xlim[1], logx)
        self.y0, self.y1 = self._t(ylim[0], logy), self._t(ylim[1], logy)
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1

    @staticmethod
    def _t(v, log):
        return math.log10(v) if log else float(v)

    def px(self, x):
        l, r, _, _ = MARGIN
        return l + (self._t(x, self.logx) - self.x0) / (self.x1 - self.x0) * (WIDTH - l - r)

    def py(self, y):
        _, _, t, b = MARGIN
        return HEIGHT - b - (self._t(y, self.logy) - self.y0) / (self.y1 - self.y0) * (HEIGHT - t - b)


def _frame(ax: _Axes, xlim, ylim, title, xlabel, ylabel) -> list[str]:
    l, r, t, b = MARGIN
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="{l}" y="{t}" width="{WIDTH - l - r}" height="{HEIGHT - t - b}" fill="none" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{t - 10}" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="15" y="{HEIGHT / 2}" text-anchor="middle" transform="rotate(-90 15 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]
    for v in (xlim[0], xlim[1]):
        out.append(f'<text x="{ax.px(v):.1f}" y="{HEIGHT - b + 14}" text-anchor="middle">{v:.3g}</text>')
    for v in (ylim[0], ylim[1]):
        out.append(f'<text x="{l - 4}" y="{ax.py(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    return out


def _limits(arrays, log):
    vals = np.concatenate([np.asarray(a, float).ravel() for a in arrays])
    vals = vals[np.isfinite(vals)]
    if log:
        vals = vals[vals > 0]
    if vals.size == 0:
        return (1.0, 10.0) if log else (0.0, 1.0)
    return float(vals.min()), float(vals.max())


def line_plot(
    path,
    series,
    title="",
    xlabel="",
    ylabel="",
    logx=False,
    logy=False,
    hlines=(),
    vlines=(),
    points=(),
):
    """``series``: iterable of ``(x, y, label)``; ``hlines``/``vlines``: ``(value, label)``;
    ``points``: ``(x, y, label)`` drawn as an X."""
    series = list(series)
    xlim = _limits([s[0] for s in series] + [[v for v, _ in vlines]], logx)
    ylim = _limits([s[1] for s in series] + [[v for v, _ in hlines]], logy)
    ax = _Axes(xlim, ylim, logx, logy)
    out = _frame(ax, xlim, ylim, title, xlabel, ylabel)
    for k, (x, y, label) in enumerate(series):
        x, y = np.asarray(x, float), np.asarray(y, float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logx:
            ok &= x > 0
        if logy:
            ok &= y > 0
        pts = " ".join(f"{ax.px(a):.2f},{ax.py(b):.2f}" for a, b in zip(x[ok], y[ok]))
        col = COLORS[k % len(COLORS)]
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{WIDTH - MARGIN[1] - 5}" y="{MARGIN[2] + 15 + 14 * k}" text-anchor="end" fill="{col}">{escape(label)}</text>')
    l, r, t, b = MARGIN
    for v, label in hlines:
        yy = ax.py(v)
        out.append(f'<line class="baseline" x1="{l}" x2="{WIDTH - r}" y1="{yy:.2f}" y2="{yy:.2f}" stroke="gray" stroke-dasharray="6,3"/>')
        out.append(f'<text x="{l + 5}" y="{yy - 3:.2f}" fill="gray">{escape(label)}</text>')
    for v, label in vlines:
        xx = ax.px(v)
        out.append(f'<line class="marker" x1="{xx:.2f}" x2="{xx:.2f}" y1="{t}" y2="{HEIGHT - b}" stroke="gray" stroke-dasharray="2,2"/>')
        out.append(f'<text x="{xx + 3:.2f}" y="{t + 12}" fill="gray">{escape(label)}</text>')
    for x, y, label in points:
        out.append(_cross(ax.px(x), ax.py(y), label))
    out.append("</svg>")
    _write(path, out)


def _cross(cx, cy, label, size=5):
    return (
        f'<g class="argmin"><path d="M{cx - size:.2f},{cy - size:.2f} L{cx + size:.2f},{cy + size:.2f} '
        f'M{cx - size:.2f},{cy + size:.2f} L{cx + size:.2f},{cy - size:.2f}" stroke="black" stroke-width="2"/>'
        f'<title>{escape(label)}</title></g>'
    )


def _color(v, lo, hi):
    if not np.isfinite(v):
        return "#ffffff"
    f = 0.0 if hi <= lo else (v - lo) / (hi - lo)
    r = int(255 * f)
    return f"#{r:02x}{int(80 + 100 * (1 - f)):02x}{255 - r:02x}"


def heatmap(path, x_axis, y_axis, values, title="", xlabel="", ylabel="", mark=None, diagonal=True):
    """``values[i, j]`` is drawn at ``(x_axis[j], y_axis[i])``; ``mark`` is an (x, y) cross."""
    xs, ys = np.asarray(x_axis, float), np.asarray(y_axis, float)
    vals = np.asarray(values, float)
    xlim, ylim = (float(xs.min()), float(xs.max())), (float(ys.min()), float(ys.max()))
    ax = _Axes(xlim, ylim)
    out = _frame(ax, xlim, ylim, title, xlabel, ylabel)
    finite = vals[np.isfinite(vals)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    dx = (ax.px(xs[-1]) - ax.px(xs[0])) / max(xs.size - 1, 1)
    dy = (ax.py(ys[0]) - ax.py(ys[-1])) / max(ys.size - 1, 1)
    for i, yv in enumerate(ys):
        for j, xv in enumerate(xs):
            out.append(
                f'<rect x="{ax.px(xv) - dx / 2:.2f}" y="{ax.py(yv) - dy / 2:.2f}" width="{dx:.2f}" '
                f'height="{dy:.2f}" fill="{_color(vals[i, j], lo, hi)}"/>'
            )
    if diagonal:
        a, b = max(xlim[0], ylim[0]), min(xlim[1], ylim[1])
        out.append(f'<line class="diagonal" x1="{ax.px(a):.2f}" y1="{ax.py(a):.2f}" x2="{ax.px(b):.2f}" y2="{ax.py(b):.2f}" stroke="black" stroke-dasharray="4,3"/>')
    if mark is not None:
        out.append(_cross(ax.px(mark[0]), ax.py(mark[1]), "minimum"))
    out.append(f'<text x="{WIDTH - MARGIN[1]}" y="{HEIGHT - 10}" text-anchor="end">range {lo:.3g} to {hi:.3g}</text>')
    out.append("</svg>")
    _write(path, out)


def _write(path, lines):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
