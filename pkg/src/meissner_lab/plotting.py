"""Deterministic SVG line plots for sweep and continuation tables.

A plot spec is a small dict (usually read from JSON)::

    {"x": "kappa", "y": ["l2_f", "l2_A"], "xlog": true, "ylog": true,
     "title": "...", "reference_slope": -1.5, "marker_x": 0.527}

``reference_slope`` draws a dashed guide through the first point of the
first series; ``marker_x`` draws a vertical marker (e.g. at mu*).  Output
depends only on the table and the spec, so identical inputs give
identical bytes.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .errors import InvalidSpec, MissingColumn, NonPositiveLogData
from .tables import ResultsTable

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")

SPEC_KEYS = {"x", "y", "xlog", "ylog", "title", "xlabel", "ylabel", "reference_slope", "marker_x"}


def _n(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _log_ticks(lo: float, hi: float) -> list:
    a, b = math.floor(lo), math.ceil(hi)
    return [float(k) for k in range(a, b + 1) if lo - 1e-9 <= k <= hi + 1e-9] or [lo]


def _tick_label(v: float, log: bool) -> str:
    if log:
        return f"1e{int(round(v))}"
    return f"{v:.4g}"


def _validate(spec: dict) -> dict:
    unknown = set(spec) - SPEC_KEYS
    if unknown:
        raise InvalidSpec(f"unknown plot spec keys {sorted(unknown)}", field=sorted(unknown)[0])
    if "x" not in spec or "y" not in spec:
        raise InvalidSpec("plot spec needs 'x' and 'y'", field="x" if "x" not in spec else "y")
    out = dict(spec)
    if isinstance(out["y"], str):
        out["y"] = [out["y"]]
    return out


def emit_plot(table: ResultsTable, spec: dict) -> str:
    """Render ``spec`` over ``table`` as an SVG document."""
    spec = _validate(spec)
    xlog, ylog = bool(spec.get("xlog", False)), bool(spec.get("ylog", False))
    for name in [spec["x"], *spec["y"]]:
        if table.columns and name not in table.columns:
            raise MissingColumn(f"no column {name!r}", column=name, available=list(table.columns))
    series = []
    if table.rows:
        xs = np.asarray(table.column(spec["x"]), dtype=float)
        if xlog and np.any(xs <= 0):
            raise NonPositiveLogData("log x axis needs positive data", column=spec["x"])
        for name in spec["y"]:
            ys = np.asarray(table.column(name), dtype=float)
            if ylog and np.any(ys <= 0):
                raise NonPositiveLogData("log y axis needs positive data", column=name)
            series.append((name, np.log10(xs) if xlog else xs, np.log10(ys) if ylog else ys))

    if series:
        allx = np.concatenate([s[1] for s in series])
        ally = np.concatenate([s[2] for s in series])
        x0, x1 = float(allx.min()), float(allx.max())
        y0, y1 = float(ally.min()), float(ally.max())
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 <= x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 <= y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    if spec.get("title"):
        out.append(f'<text x="{WIDTH / 2:.2f}" y="22" text-anchor="middle" font-size="14">'
                   f'{escape(str(spec["title"]))}</text>')
    xticks = _log_ticks(x0, x1) if xlog else _nice_ticks(x0, x1)
    yticks = _log_ticks(y0, y1) if ylog else _nice_ticks(y0, y1)
    for t in xticks:
        X = px(t)
        out.append(f'<line x1="{_n(X)}" y1="{_n(TOP + ph)}" x2="{_n(X)}" y2="{_n(TOP + ph + 5)}" stroke="black"/>')
        out.append(f'<text x="{_n(X)}" y="{_n(TOP + ph + 18)}" text-anchor="middle" font-size="11">'
                   f'{_tick_label(t, xlog)}</text>')
    for t in yticks:
        Y = py(t)
        out.append(f'<line x1="{_n(LEFT - 5)}" y1="{_n(Y)}" x2="{_n(LEFT)}" y2="{_n(Y)}" stroke="black"/>')
        out.append(f'<text x="{_n(LEFT - 8)}" y="{_n(Y + 4)}" text-anchor="end" font-size="11">'
                   f'{_tick_label(t, ylog)}</text>')
    xlabel = spec.get("xlabel", spec["x"])
    ylabel = spec.get("ylabel", ", ".join(spec["y"]))
    out.append(f'<text x="{_n(LEFT + pw / 2)}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">'
               f'{escape(str(xlabel))}</text>')
    out.append(f'<text x="16" y="{_n(TOP + ph / 2)}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {_n(TOP + ph / 2)})">{escape(str(ylabel))}</text>')

    for k, (name, xs, ys) in enumerate(series):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{_n(px(x))},{_n(py(y))}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        for x, y in zip(xs, ys):
            out.append(f'<circle cx="{_n(px(x))}" cy="{_n(py(y))}" r="2.5" fill="{color}"/>')
        out.append(f'<text x="{_n(LEFT + pw - 8)}" y="{_n(TOP + 16 + 15 * k)}" text-anchor="end" '
                   f'font-size="11" fill="{color}">{escape(name)}</text>')

    slope = spec.get("reference_slope")
    if slope is not None and series:
        # on log-log axes a slope s is a straight line in decades
        name, xs, ys = series[0]
        xa, ya = xs[0], ys[0]
        xb = xs[-1]
        yb = ya + float(slope) * (xb - xa)
        out.append(f'<line x1="{_n(px(xa))}" y1="{_n(py(ya))}" x2="{_n(px(xb))}" y2="{_n(py(yb))}" '
                   f'stroke="gray" stroke-dasharray="6,4"/>')
        out.append(f'<text x="{_n(px(xb))}" y="{_n(py(yb) - 6)}" text-anchor="end" font-size="11" '
                   f'fill="gray">slope {float(slope):g}</text>')

    mark = spec.get("marker_x")
    if mark is not None:
        xm = math.log10(mark) if xlog and mark > 0 else float(mark)
        X = px(xm)
        out.append(f'<line x1="{_n(X)}" y1="{TOP}" x2="{_n(X)}" y2="{TOP + ph}" stroke="black" '
                   f'stroke-dasharray="2,3"/>')
        out.append(f'<text x="{_n(X + 4)}" y="{TOP + 12}" font-size="11">{float(mark):.6g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
