"""Self-contained SVG line and scatter plots (no plotting dependency)."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

W, H, PAD = 480, 320, 48


def _scale(lo, hi, a, b):
    span = (hi - lo) or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _frame(title, xlabel, ylabel, xlo, xhi, ylo, yhi):
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD / 2}" y2="{H - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD / 2}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {H / 2})">{escape(ylabel)}</text>',
        f'<text x="{PAD}" y="{H - PAD + 14}" font-size="10" text-anchor="middle">{xlo:.3g}</text>',
        f'<text x="{W - PAD / 2}" y="{H - PAD + 14}" font-size="10" text-anchor="middle">{xhi:.3g}</text>',
        f'<text x="{PAD - 4}" y="{H - PAD}" font-size="10" text-anchor="end">{ylo:.3g}</text>',
        f'<text x="{PAD - 4}" y="{PAD / 2 + 4}" font-size="10" text-anchor="end">{yhi:.3g}</text>',
    ]
    return out


def line_plot(x, y, err=None, *, title="", xlabel="", ylabel="") -> str:
    x, y = np.asarray(x, float), np.asarray(y, float)
    err = np.zeros_like(y) if err is None else np.asarray(err, float)
    ylo, yhi = float(np.min(y - err, initial=0.0)), float(np.max(y + err, initial=1.0))
    xlo, xhi = float(np.min(x, initial=0.0)), float(np.max(x, initial=1.0))
    sx = _scale(xlo, xhi, PAD, W - PAD / 2)
    sy = _scale(ylo, yhi, H - PAD, PAD / 2)
    out = _frame(title, xlabel, ylabel, xlo, xhi, ylo, yhi)
    if x.size:
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="2"/>')
    for a, b, e in zip(x, y, err):
        out.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3" fill="steelblue"/>')
        if e > 0:
            out.append(
                f'<line x1="{sx(a):.2f}" y1="{sy(b - e):.2f}" x2="{sx(a):.2f}" y2="{sy(b + e):.2f}" stroke="gray"/>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def scatter_plot(x, y, *, title="", xlabel="", ylabel="", diagonal=True) -> str:
    x, y = np.asarray(x, float), np.asarray(y, float)
    lo = float(min(np.min(x, initial=0.0), np.min(y, initial=0.0)))
    hi = float(max(np.max(x, initial=1.0), np.max(y, initial=1.0)))
    sx = _scale(lo, hi, PAD, W - PAD / 2)
    sy = _scale(lo, hi, H - PAD, PAD / 2)
    out = _frame(title, xlabel, ylabel, lo, hi, lo, hi)
    if diagonal:
        out.append(f'<line x1="{sx(lo):.2f}" y1="{sy(lo):.2f}" x2="{sx(hi):.2f}" y2="{sy(hi):.2f}" '
                   'stroke="red" stroke-dasharray="4"/>')
    for a, b in zip(x, y):
        out.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="2" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
