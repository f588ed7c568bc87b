"""Minimal SVG line plots written by hand (no plotting dependency)."""
from __future__ import annotations

import math

WIDTH, HEIGHT = 480, 320
MARGIN = 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_plot(series, title, xlabel, ylabel, logx=False, bands=()):
    """``series``: list of ``(label, xs, ys)``; ``bands``: list of ``(label, xs, lower, upper)``."""
    tx = (lambda x: math.log10(x)) if logx else (lambda x: x)
    xs = [tx(x) for _, xv, _ in series for x in xv] + [tx(x) for _, xv, _, _ in bands for x in xv]
    ys = [y for _, _, yv in series for y in yv] + [y for _, _, lo, hi in bands for y in (*lo, *hi)]
    ys = [y for y in ys if math.isfinite(y)]
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x1 <= x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    pad = 0.05 * (y1 - y0) if y1 > y0 else 0.5
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return MARGIN + (tx(x) - x0) / (x1 - x0) * (WIDTH - 2 * MARGIN)

    def py(y):
        return HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2 * MARGIN)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="13">{_esc(title)}</text>',
           f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
           f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
           f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle">{_esc(xlabel)}</text>',
           f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" transform="rotate(-90 14 {HEIGHT / 2})">'
           f'{_esc(ylabel)}</text>']
    for v in _ticks(y0, y1):
        out.append(f'<text x="{MARGIN - 4}" y="{py(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    for v in _ticks(x0, x1):
        label = 10 ** v if logx else v
        xp = MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2 * MARGIN)
        out.append(f'<text x="{xp:.1f}" y="{HEIGHT - MARGIN + 14}" text-anchor="middle">{label:.3g}</text>')
    for i, (label, bx, lo, hi) in enumerate(bands):
        pts = [(px(x), py(y)) for x, y in zip(bx, hi)] + [(px(x), py(y)) for x, y in zip(reversed(bx), reversed(lo))]
        out.append(f'<polygon points="{_pts(pts)}" fill="{COLORS[(i + 3) % len(COLORS)]}" fill-opacity="0.2">'
                   f'<title>{_esc(label)}</title></polygon>')
    for i, (label, xv, yv) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        pts = [(px(x), py(y)) for x, y in zip(xv, yv) if math.isfinite(y)]
        out.append(f'<polyline points="{_pts(pts)}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in pts:
            out.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="2.5" fill="{color}"/>')
        out.append(f'<text x="{WIDTH - MARGIN + 4}" y="{MARGIN + 14 * i}" fill="{color}">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _pts(pts):
    return " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
