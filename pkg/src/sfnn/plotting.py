"""Minimal deterministic SVG line plots from CSV files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

from .errors import ConfigurationError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


@dataclass(frozen=True)
class PlotSpec:
    """Which columns to draw and how.

    ``x`` names the abscissa column; ``None`` uses the row index.  ``y`` lists
    the series (``None``: every column except ``x``).
    """

    x: str | None = None
    y: tuple | None = None
    semilog_y: bool = False
    title: str = ""
    width: int = 640
    height: int = 400
    output: str | None = None


@dataclass(frozen=True)
class PlotResult:
    path: Path
    dropped: int


def read_csv_columns(path) -> dict[str, list[float]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigurationError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    cols: dict[str, list[float]] = {h: [] for h in header}
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ConfigurationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        for h, v in zip(header, row):
            try:
                cols[h].append(float(v))
            except ValueError:
                raise ConfigurationError(f"{path}:{lineno}: non-numeric value {v!r} in column {h!r}") from None
    return cols


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def render_plot(csv_path, spec: PlotSpec = PlotSpec()) -> PlotResult:
    """Write an SVG next to ``csv_path`` (or at ``spec.output``); returns its path and the dropped-point count."""
    cols = read_csv_columns(csv_path)
    names = list(cols)
    if spec.x is not None and spec.x not in cols:
        raise ConfigurationError(f"{csv_path}: no column {spec.x!r}")
    ys = list(spec.y) if spec.y is not None else [n for n in names if n != spec.x]
    for name in ys:
        if name not in cols:
            raise ConfigurationError(f"{csv_path}: no column {name!r}")
    n_rows = len(cols[names[0]])
    xs = cols[spec.x] if spec.x is not None else [float(i) for i in range(n_rows)]

    dropped = 0
    series = []
    for name in ys:
        pts = []
        for x, y in zip(xs, cols[name]):
            if not (math.isfinite(x) and math.isfinite(y)) or (spec.semilog_y and y <= 0):
                dropped += 1
                continue
            pts.append((x, math.log10(y) if spec.semilog_y else y))
        series.append((name, pts))

    all_pts = [p for _, pts in series for p in pts]
    if all_pts:
        x_lo, x_hi = min(p[0] for p in all_pts), max(p[0] for p in all_pts)
        y_lo, y_hi = min(p[1] for p in all_pts), max(p[1] for p in all_pts)
    else:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        pad = 0.5 if spec.semilog_y else max(abs(y_lo) * 0.1, 0.5)
        y_lo, y_hi = y_lo - pad, y_hi + pad

    W, H = spec.width, spec.height
    left, right, top, bottom = 70, 20, 30 if spec.title else 15, 45

    def px(x):
        return left + (x - x_lo) / (x_hi - x_lo) * (W - left - right)

    def py(y):
        return H - bottom - (y - y_lo) / (y_hi - y_lo) * (H - top - bottom)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
    ]
    if spec.title:
        out.append(f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(spec.title)}</text>')
    out.append(
        f'<rect x="{left}" y="{top}" width="{W - left - right}" height="{H - top - bottom}" fill="none" stroke="black"/>'
    )
    for tx in _ticks(x_lo, x_hi):
        out.append(f'<text x="{_fmt(px(tx))}" y="{H - bottom + 16}" text-anchor="middle" font-size="10">{tx:.3g}</text>')
    for ty in _ticks(y_lo, y_hi):
        label = f"1e{ty:.1f}" if spec.semilog_y else f"{ty:.3g}"
        out.append(f'<text x="{left - 6}" y="{_fmt(py(ty) + 3)}" text-anchor="end" font-size="10">{label}</text>')
    if spec.x:
        out.append(f'<text x="{W / 2:.1f}" y="{H - 8}" text-anchor="middle" font-size="11">{escape(spec.x)}</text>')
    for k, (name, pts) in enumerate(series):
        colour = PALETTE[k % len(PALETTE)]
        if pts:
            coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in pts)
            out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{coords}"/>')
        ly = top + 14 + 14 * k
        out.append(f'<line x1="{W - right - 110}" y1="{ly - 4}" x2="{W - right - 90}" y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{W - right - 85}" y="{ly}" font-size="10">{escape(name)}</text>')
    out.append("</svg>")

    target = Path(spec.output) if spec.output else Path(csv_path).with_suffix(".svg")
    target.write_text("\n".join(out) + "\n")
    return PlotResult(target, dropped)
