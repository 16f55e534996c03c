"""Self-contained SVG line charts."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


def line_chart_svg(series, title="", xlabel="", ylabel="", width=720, height=440) -> str:
    """Render ``{label: (x, y)}`` as an SVG document string."""
    left, right, top, bottom = 80, 190, 40, 55
    pw, ph = width - left - right, height - top - bottom
    xs = [np.asarray(x, dtype=float) for x, _ in series.values()]
    ys = [np.asarray(y, dtype=float) for _, y in series.values()]
    finite = [v[np.isfinite(v)] for v in ys]
    x_lo = min((x.min() for x in xs if x.size), default=0.0)
    x_hi = max((x.max() for x in xs if x.size), default=1.0)
    y_lo = min((v.min() for v in finite if v.size), default=0.0)
    y_hi = max((v.max() for v in finite if v.size), default=1.0)
    pad = 0.05 * (y_hi - y_lo or 1.0)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0

    def sx(v):
        return left + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return top + (1.0 - (v - y_lo) / (y_hi - y_lo)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for v in _ticks(x_lo, x_hi):
        out.append(f'<line x1="{sx(v):.1f}" y1="{top + ph}" x2="{sx(v):.1f}" y2="{top + ph + 5}" stroke="#444"/>')
        out.append(f'<text x="{sx(v):.1f}" y="{top + ph + 18}" text-anchor="middle">{v:g}</text>')
    for v in _ticks(y_lo, y_hi):
        out.append(f'<line x1="{left - 5}" y1="{sy(v):.1f}" x2="{left}" y2="{sy(v):.1f}" stroke="#444"/>')
        out.append(f'<text x="{left - 8}" y="{sy(v) + 4:.1f}" text-anchor="end">{v:.4g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text transform="translate(18 {top + ph / 2:.1f}) rotate(-90)" text-anchor="middle">{escape(ylabel)}</text>')
    for k, (label, (x, y)) in enumerate(series.items()):
        color = _PALETTE[k % len(_PALETTE)]
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        keep = np.isfinite(y)
        # thin long series to at most ~1000 vertices
        stride = max(1, int(keep.sum()) // 1000)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in list(zip(x[keep], y[keep]))[::stride])
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{pts}"/>')
        ly = top + 14 + 18 * k
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 34}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 40}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_line_chart(path, series, **kwargs) -> None:
    with open(path, "w") as fh:
        fh.write(line_chart_svg(series, **kwargs))
