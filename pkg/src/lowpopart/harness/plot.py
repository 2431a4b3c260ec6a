"""Minimal deterministic SVG line charts with +-1 std bands."""
from __future__ import annotations

import csv
from pathlib import Path

from ..errors import ContractError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 30, 50

# (x column, series column, mean column, std column) per aggregate flavour
LAYOUTS = (("n0", "method", "mean_err", "std_err"), ("t", "algo", "mean_cumreg", "std_cumreg"))


def read_aggregate(path):
    """Parse an aggregate CSV into ``(x_name, y_name, {series: [(x, mean, std), ...]})``."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        layout = next((l for l in LAYOUTS if all(c in cols for c in l)), None)
        if layout is None:
            raise ContractError(f"{path}: unrecognized aggregate columns {cols}")
        xk, sk, mk, dk = layout
        series = {}
        try:
            for row in reader:
                series.setdefault(row[sk], []).append((float(row[xk]), float(row[mk]), float(row[dk])))
        except (TypeError, ValueError) as exc:
            raise ContractError(f"{path}: malformed row ({exc})") from exc
    if not series:
        raise ContractError(f"{path}: no data rows")
    for pts in series.values():
        pts.sort()
    return xk, mk, series


def _n(v: float) -> str:
    return f"{v:.2f}"


def render_svg(x_name: str, y_name: str, series: dict, title: str = "") -> str:
    xs = [p[0] for pts in series.values() for p in pts]
    lo = [p[1] - p[2] for pts in series.values() for p in pts]
    hi = [p[1] + p[2] for pts in series.values() for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(0.0, min(lo)), max(hi)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return TOP + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
           f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>']
    for k in range(5):
        xv = x0 + (x1 - x0) * k / 4
        yv = y0 + (y1 - y0) * k / 4
        out.append(f'<text x="{_n(sx(xv))}" y="{TOP + ph + 18}" font-size="11" text-anchor="middle">{xv:.4g}</text>')
        out.append(f'<text x="{LEFT - 6}" y="{_n(sy(yv) + 4)}" font-size="11" text-anchor="end">{yv:.4g}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 10}" font-size="12" text-anchor="middle">{x_name}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.2f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.2f})">{y_name}</text>')
    if title:
        out.append(f'<text x="{LEFT + pw / 2:.2f}" y="18" font-size="13" text-anchor="middle">{title}</text>')
    for i, (name, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        upper = [f"{_n(sx(x))},{_n(sy(m + s))}" for x, m, s in pts]
        lower = [f"{_n(sx(x))},{_n(sy(m - s))}" for x, m, s in reversed(pts)]
        out.append(f'<polygon points="{" ".join(upper + lower)}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        d = " ".join(("M" if j == 0 else "L") + f"{_n(sx(x))},{_n(sy(m))}" for j, (x, m, _) in enumerate(pts))
        out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = TOP + 16 * i + 10
        out.append(f'<line x1="{LEFT + pw + 12}" y1="{ly}" x2="{LEFT + pw + 32}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 38}" y="{ly + 4}" font-size="11">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(csv_path, svg_path, title: str = "") -> Path:
    x_name, y_name, series = read_aggregate(csv_path)
    svg_path = Path(svg_path)
    svg_path.write_text(render_svg(x_name, y_name, series, title))
    return svg_path
