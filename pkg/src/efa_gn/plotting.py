"""Minimal SVG convergence plots (gradient norm on a log axis)."""

import math
from xml.sax.saxutils import escape

PALETTE = {"reduced": "#1f77b4", "altls": "#d62728"}
FALLBACK = ["#2ca02c", "#9467bd", "#8c564b", "#e377c2"]


def convergence_svg(curves, title="", width=640, height=400):
    """Render ``curves``, a list of ``(label, solver, grad_norms)``, as one SVG string.

    Each curve becomes one ``<polyline>``; y is log10 of the gradient norm.
    """
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    pts = [(lbl, s, [g for g in gs if g > 0]) for lbl, s, gs in curves]
    ys = [math.log10(g) for _, _, gs in pts for g in gs]
    n_max = max((len(gs) for _, _, gs in pts), default=1)
    y_lo, y_hi = (math.floor(min(ys)), math.ceil(max(ys))) if ys else (0, 1)
    if y_hi == y_lo:
        y_hi = y_lo + 1
    x_hi = max(n_max - 1, 1)

    def sx(i):
        return left + pw * i / x_hi

    def sy(v):
        return top + ph * (y_hi - v) / (y_hi - y_lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    step = max(1, (y_hi - y_lo) // 8)
    for e in range(y_lo, y_hi + 1, step):
        y = sy(e)
        out.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end" font-size="10">1e{e}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">iteration</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" font-size="12" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})" text-anchor="middle">gradient norm</text>')
    out.append(f'<text x="{left + pw}" y="{top + ph + 14}" text-anchor="end" font-size="10">{x_hi}</text>')

    extra = iter(FALLBACK * 8)
    colors = {}
    for label, solver, gs in pts:
        if solver not in colors:
            colors[solver] = PALETTE.get(solver) or next(extra)
        coords = " ".join(f"{sx(i):.2f},{sy(math.log10(g)):.2f}" for i, g in enumerate(gs))
        out.append(
            f'<polyline data-solver="{escape(solver)}" data-label="{escape(label)}" fill="none" '
            f'stroke="{colors[solver]}" stroke-width="1.2" stroke-opacity="0.8" points="{coords}"/>'
        )
    for k, (solver, c) in enumerate(colors.items()):
        y = top + 12 + 14 * k
        out.append(f'<line x1="{left + pw - 90}" y1="{y}" x2="{left + pw - 70}" y2="{y}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 65}" y="{y + 4}" font-size="11">{escape(solver)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_convergence_svg(path, curves, title=""):
    with open(path, "w") as fh:
        fh.write(convergence_svg(curves, title))
