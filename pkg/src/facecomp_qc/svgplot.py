"""Minimal self-contained SVG line plots (polylines + axes), no plotting dependency."""

from __future__ import annotations

from pathlib import Path

PALETTE = ("#1f6fb4", "#d1495b", "#2e8b57", "#b8860b", "#6a4fa3", "#444444")


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def line_plot(path, series, xlabel: str, ylabel: str, title: str = "",
              width: int = 640, height: int = 440) -> None:
    """Write a line plot; `series` is a list of (label, xs, ys) triples."""
    margin_l, margin_r, margin_t, margin_b = 62, 16, 34, 46
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    finite = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys)
              if abs(x) != float("inf") and abs(y) != float("inf")]
    if not finite:
        finite = [(0.0, 0.0), (1.0, 1.0)]
    x_lo = min(p[0] for p in finite)
    x_hi = max(p[0] for p in finite)
    y_lo = min(p[1] for p in finite)
    y_hi = max(p[1] for p in finite)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(x: float) -> float:
        return margin_l + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return margin_t + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#333"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
                     f'font-size="13">{title}</text>')
    for tx in _ticks(x_lo, x_hi):
        x = px(tx)
        parts.append(f'<line x1="{x:.1f}" y1="{margin_t + plot_h}" x2="{x:.1f}" '
                     f'y2="{margin_t + plot_h + 4}" stroke="#333"/>')
        parts.append(f'<text x="{x:.1f}" y="{margin_t + plot_h + 16}" '
                     f'text-anchor="middle">{_fmt(tx)}</text>')
    for ty in _ticks(y_lo, y_hi):
        y = py(ty)
        parts.append(f'<line x1="{margin_l - 4}" y1="{y:.1f}" x2="{margin_l}" '
                     f'y2="{y:.1f}" stroke="#333"/>')
        parts.append(f'<text x="{margin_l - 7}" y="{y + 3.5:.1f}" '
                     f'text-anchor="end">{_fmt(ty)}</text>')
    parts.append(f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 10}" '
                 f'text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="14" y="{margin_t + plot_h / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {margin_t + plot_h / 2:.1f})">{ylabel}</text>')

    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys)
                          if abs(x) != float("inf") and abs(y) != float("inf"))
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     'stroke-width="1.6"/>')
        ly = margin_t + 14 + 14 * i
        lx = margin_l + plot_w - 130
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="1.6"/>')
        parts.append(f'<text x="{lx + 23}" y="{ly}">{label}</text>')

    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
