"""Log-log convergence plots written as plain SVG."""
from __future__ import annotations

import math

WIDTH, HEIGHT = 640, 480
MARGIN = 70
COLOURS = {"L2": "#1f77b4", "H1": "#d62728", "Linf": "#2ca02c", "U": "#9467bd",
           "U+H1": "#ff7f0e"}


def _esc(text):
    return (str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))


def _fmt(v):
    return f"{v:.2f}"


def convergence_svg(title: str, series: dict, guides: dict) -> str:
    """SVG of error against mesh size on log-log axes.

    ``series`` maps a label to ``(h_values, errors)``; ``guides`` maps a
    label to a slope drawn as a dashed line through the last point of the
    series with the same label (or the first series).
    """
    pts = [(h, e) for hs, es in series.values() for h, e in zip(hs, es) if e and e > 0]
    if not pts:
        raise ValueError("nothing to plot")
    lx = [math.log10(h) for h, _ in pts]
    ly = [math.log10(e) for _, e in pts]
    x0, x1 = math.floor(min(lx) * 4) / 4, math.ceil(max(lx) * 4) / 4
    y0, y1 = math.floor(min(ly)), math.ceil(max(ly))
    if x1 == x0:
        x1 = x0 + 0.25
    if y1 == y0:
        y1 = y0 + 1

    def X(h):
        return MARGIN + (math.log10(h) - x0) / (x1 - x0) * (WIDTH - 2 * MARGIN)

    def Y(e):
        return HEIGHT - MARGIN - (math.log10(e) - y0) / (y1 - y0) * (HEIGHT - 2 * MARGIN)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="15">{_esc(title)}</text>']
    # axes and decade grid
    out.append(f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" '
               f'height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="black"/>')
    for k in range(y0, y1 + 1):
        y = Y(10.0 ** k)
        out.append(f'<line x1="{MARGIN}" y1="{_fmt(y)}" x2="{WIDTH - MARGIN}" y2="{_fmt(y)}" '
                   f'stroke="#ddd"/>')
        out.append(f'<text x="{MARGIN - 6}" y="{_fmt(y + 4)}" text-anchor="end">1e{k}</text>')
    k = x0
    while k <= x1 + 1e-9:
        x = MARGIN + (k - x0) / (x1 - x0) * (WIDTH - 2 * MARGIN)
        out.append(f'<line x1="{_fmt(x)}" y1="{MARGIN}" x2="{_fmt(x)}" y2="{HEIGHT - MARGIN}" '
                   f'stroke="#eee"/>')
        out.append(f'<text x="{_fmt(x)}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle">'
                   f'{10 ** k:.3g}</text>')
        k += 0.25
    out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 20}" text-anchor="middle">mesh size h</text>')
    out.append(f'<text x="18" y="{HEIGHT / 2}" text-anchor="middle" '
               f'transform="rotate(-90 18 {HEIGHT / 2})">error</text>')

    legend_y = MARGIN + 14
    for label, (hs, es) in series.items():
        good = [(h, e) for h, e in zip(hs, es) if e and e > 0]
        if not good:
            continue
        colour = COLOURS.get(label, "black")
        path = " ".join(f"{_fmt(X(h))},{_fmt(Y(e))}" for h, e in good)
        out.append(f'<polyline points="{path}" fill="none" stroke="{colour}" stroke-width="2"/>')
        for h, e in good:
            out.append(f'<circle cx="{_fmt(X(h))}" cy="{_fmt(Y(e))}" r="3" fill="{colour}"/>')
        out.append(f'<text x="{WIDTH - MARGIN - 8}" y="{legend_y}" text-anchor="end" '
                   f'fill="{colour}">{_esc(label)}</text>')
        legend_y += 16

    first = next(iter(series))
    for label, slope in guides.items():
        hs, es = series.get(label, series[first])
        good = [(h, e) for h, e in zip(hs, es) if e and e > 0]
        if len(good) < 2:
            continue
        (ha, _), (hb, eb) = good[0], good[-1]
        # anchor below the data so the guide does not hide it
        eb = eb / 2.0
        ea = eb * (ha / hb) ** slope
        out.append(f'<line x1="{_fmt(X(ha))}" y1="{_fmt(Y(ea))}" x2="{_fmt(X(hb))}" '
                   f'y2="{_fmt(Y(eb))}" stroke="{COLOURS.get(label, "gray")}" '
                   f'stroke-dasharray="6,4"/>')
        out.append(f'<text x="{_fmt(X(hb) + 4)}" y="{_fmt(Y(eb) + 12)}" '
                   f'fill="gray">slope {slope:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
