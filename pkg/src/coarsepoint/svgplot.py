"""Minimal deterministic SVG line plots drawn from CSV tables."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Optional, Sequence

WIDTH, HEIGHT = 640, 440
MARGIN = dict(left=80, right=170, top=40, bottom=60)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")
DASHES = ("", "6,4", "2,3", "8,3,2,3")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _tick_label(v: float, log: bool) -> str:
    if log:
        e = round(math.log10(v))
        return f"1e{e}"
    return f"{v:g}"


def _log_ticks(lo: float, hi: float) -> list[float]:
    e0, e1 = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    step = max(1, (e1 - e0) // 8)
    return [10.0**e for e in range(e0, e1 + 1, step)]


def _lin_ticks(lo: float, hi: float) -> list[float]:
    span = hi - lo or 1.0
    raw = span / 6
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    n = int(math.floor((hi - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(n)]


def line_plot(
    series: dict[str, tuple[Sequence[float], Sequence[float]]],
    path,
    title: str,
    xlabel: str,
    ylabel: str,
    logx: bool = False,
    logy: bool = True,
    steps: bool = False,
) -> None:
    """Write a multi-series line plot; nonpositive values are dropped on log axes."""
    clean = {}
    for name, (xs, ys) in series.items():
        pts = [
            (float(x), float(y))
            for x, y in zip(xs, ys)
            if math.isfinite(x) and math.isfinite(y) and (not logx or x > 0) and (not logy or y > 0)
        ]
        if pts:
            clean[name] = pts
    all_x = [p[0] for pts in clean.values() for p in pts] or [1.0]
    all_y = [p[1] for pts in clean.values() for p in pts] or [1.0]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    if logy:
        y_lo, y_hi = 10 ** math.floor(math.log10(y_lo)), 10 ** math.ceil(math.log10(y_hi))
        if y_lo == y_hi:
            y_lo /= 10
    elif y_lo == y_hi:
        y_lo, y_hi = y_lo - 1, y_hi + 1
    if x_lo == x_hi:
        x_lo, x_hi = (x_lo / 2, x_hi * 2) if logx else (x_lo - 1, x_hi + 1)

    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def tx(x):
        f = (math.log10(x) - math.log10(x_lo)) / (math.log10(x_hi) - math.log10(x_lo)) if logx else (x - x_lo) / (x_hi - x_lo)
        return left + f * pw

    def ty(y):
        f = (math.log10(y) - math.log10(y_lo)) / (math.log10(y_hi) - math.log10(y_lo)) if logy else (y - y_lo) / (y_hi - y_lo)
        return top + (1 - f) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" '
        'font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{_fmt(left + pw / 2)}" y="22" text-anchor="middle" font-size="14">{_escape(title)}</text>',
    ]
    x_ticks = _log_ticks(x_lo, x_hi) if logx else _lin_ticks(x_lo, x_hi)
    y_ticks = _log_ticks(y_lo, y_hi) if logy else _lin_ticks(y_lo, y_hi)
    for v in x_ticks:
        if x_lo <= v <= x_hi:
            x = tx(v)
            out.append(f'<line x1="{_fmt(x)}" y1="{top}" x2="{_fmt(x)}" y2="{top + ph}" stroke="#ddd"/>')
            out.append(f'<text x="{_fmt(x)}" y="{top + ph + 18}" text-anchor="middle">{_tick_label(v, logx)}</text>')
    for v in y_ticks:
        if y_lo <= v <= y_hi:
            y = ty(v)
            out.append(f'<line x1="{left}" y1="{_fmt(y)}" x2="{left + pw}" y2="{_fmt(y)}" stroke="#ddd"/>')
            out.append(f'<text x="{left - 6}" y="{_fmt(y + 4)}" text-anchor="end">{_tick_label(v, logy)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{_fmt(left + pw / 2)}" y="{HEIGHT - 18}" text-anchor="middle">{_escape(xlabel)}</text>')
    out.append(
        f'<text x="18" y="{_fmt(top + ph / 2)}" text-anchor="middle" '
        f'transform="rotate(-90 18 {_fmt(top + ph / 2)})">{_escape(ylabel)}</text>'
    )
    for i, (name, pts) in enumerate(clean.items()):
        color, dash = COLORS[i % len(COLORS)], DASHES[(i // len(COLORS)) % len(DASHES)]
        coords = []
        for j, (x, y) in enumerate(pts):
            if steps and j:
                coords.append(f"{_fmt(tx(x))},{_fmt(ty(pts[j - 1][1]))}")
            coords.append(f"{_fmt(tx(x))},{_fmt(ty(y))}")
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.6"{dash_attr} points="{" ".join(coords)}"/>'
        )
        ly = top + 14 + 18 * i
        lx = left + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 22}" y2="{ly}" stroke="{color}" stroke-width="1.6"{dash_attr}/>')
        out.append(f'<text x="{lx + 28}" y="{ly + 4}">{_escape(name)}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def plot_csv(
    csv_path,
    svg_path,
    x: str,
    y: str,
    group_by: Sequence[str],
    title: str,
    xlabel: Optional[str] = None,
    ylabel: Optional[str] = None,
    logx: bool = False,
    logy: bool = True,
    steps: bool = False,
    where: Optional[dict] = None,
) -> None:
    """Plot column ``y`` against ``x`` with one line per distinct ``group_by`` tuple."""
    series: dict[str, tuple[list, list]] = {}
    with open(csv_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if where and any(row[k] != v for k, v in where.items()):
                continue
            name = " ".join(f"{row[g]}" for g in group_by) if group_by else y
            xs, ys = series.setdefault(name, ([], []))
            xs.append(float(row[x]))
            ys.append(float(row[y]))
    line_plot(series, svg_path, title, xlabel or x, ylabel or y, logx=logx, logy=logy, steps=steps)
