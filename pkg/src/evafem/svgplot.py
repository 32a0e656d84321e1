"""Minimal hand-rolled SVG log-log plots for convergence data."""

import math

_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 64, 16, 24, 44
_WIDTH, _HEIGHT = 640, 480
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]


def guide_segment(x0, x1, anchor_x, anchor_y, slope=-1.0):
    """Endpoints of a straight guide line in log-log coordinates:
    y = anchor_y * (x / anchor_x)^slope evaluated at x0 and x1."""
    y0 = anchor_y * (x0 / anchor_x) ** slope
    y1 = anchor_y * (x1 / anchor_x) ** slope
    return (x0, y0), (x1, y1)


class _LogMap:
    def __init__(self, xs, ys):
        lx = [math.log10(v) for v in xs if v > 0]
        ly = [math.log10(v) for v in ys if v > 0]
        self.x0, self.x1 = min(lx), max(lx)
        self.y0, self.y1 = min(ly), max(ly)
        if self.x1 - self.x0 < 1e-12:
            self.x1 = self.x0 + 1.0
        if self.y1 - self.y0 < 1e-12:
            self.y1 = self.y0 + 1.0

    def px(self, x):
        t = (math.log10(x) - self.x0) / (self.x1 - self.x0)
        return _MARGIN_L + t * (_WIDTH - _MARGIN_L - _MARGIN_R)

    def py(self, y):
        t = (math.log10(y) - self.y0) / (self.y1 - self.y0)
        return _HEIGHT - _MARGIN_B - t * (_HEIGHT - _MARGIN_T - _MARGIN_B)


def _decades(lo, hi):
    return range(math.ceil(lo - 1e-9), math.floor(hi + 1e-9) + 1)


def loglog_svg(path, series, guide_slope=-1.0, xlabel="degrees of freedom",
               ylabel="squared error", title=""):
    """Write a log-log plot with one dashed guide line of fixed slope.

    ``series`` is a list of (label, xs, ys); points with non-positive
    values are dropped (log scale).
    """
    all_x, all_y = [], []
    clean = []
    for label, xs, ys in series:
        pairs = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0]
        if pairs:
            clean.append((label, pairs))
            all_x.extend(p[0] for p in pairs)
            all_y.extend(p[1] for p in pairs)
    if not clean:
        raise ValueError("nothing to plot: no positive data points")
    m = _LogMap(all_x, all_y)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}"'
        f' viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{_WIDTH / 2}" y="16" text-anchor="middle">{title}</text>')

    # frame and decade ticks
    x_axis_y = _HEIGHT - _MARGIN_B
    parts.append(
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{_WIDTH - _MARGIN_L - _MARGIN_R}"'
        f' height="{_HEIGHT - _MARGIN_T - _MARGIN_B}" fill="none" stroke="#444"/>'
    )
    for e in _decades(m.x0, m.x1):
        px = m.px(10.0 ** e)
        parts.append(f'<line x1="{px:.1f}" y1="{x_axis_y}" x2="{px:.1f}" y2="{x_axis_y + 5}" stroke="#444"/>')
        parts.append(f'<text x="{px:.1f}" y="{x_axis_y + 18}" text-anchor="middle">1e{e}</text>')
    for e in _decades(m.y0, m.y1):
        py = m.py(10.0 ** e)
        parts.append(f'<line x1="{_MARGIN_L - 5}" y1="{py:.1f}" x2="{_MARGIN_L}" y2="{py:.1f}" stroke="#444"/>')
        parts.append(f'<text x="{_MARGIN_L - 8}" y="{py + 4:.1f}" text-anchor="end">1e{e}</text>')
    parts.append(
        f'<text x="{(_MARGIN_L + _WIDTH - _MARGIN_R) / 2}" y="{_HEIGHT - 8}"'
        f' text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="14" y="{(_MARGIN_T + _HEIGHT - _MARGIN_B) / 2}" text-anchor="middle"'
        f' transform="rotate(-90 14 {(_MARGIN_T + _HEIGHT - _MARGIN_B) / 2})">{ylabel}</text>'
    )

    # guide line anchored at the first point of the first series
    if guide_slope is not None:
        ax, ay = clean[0][1][0]
        x_lo, x_hi = 10.0 ** m.x0, 10.0 ** m.x1
        (gx0, gy0), (gx1, gy1) = guide_segment(x_lo, x_hi, ax, ay, guide_slope)
        parts.append(
            f'<line data-guide-slope="{guide_slope}" x1="{m.px(gx0):.2f}" y1="{m.py(gy0):.2f}"'
            f' x2="{m.px(gx1):.2f}" y2="{m.py(gy1):.2f}"'
            f' stroke="black" stroke-dasharray="6 4"/>'
        )

    for k, (label, pairs) in enumerate(clean):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{m.px(x):.2f},{m.py(y):.2f}" for x, y in pairs)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in pairs:
            parts.append(f'<circle cx="{m.px(x):.2f}" cy="{m.py(y):.2f}" r="2.5" fill="{color}"/>')
        parts.append(
            f'<text x="{_WIDTH - _MARGIN_R - 8}" y="{_MARGIN_T + 16 + 14 * k}"'
            f' text-anchor="end" fill="{color}">{label}</text>'
        )

    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
