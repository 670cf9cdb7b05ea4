"""Hand-rolled standalone SVG curve plots (no plotting dependency)."""

from __future__ import annotations

import numpy as np

__all__ = ["Panel", "write_svg"]

_PANEL_W = 320
_PANEL_H = 300
_MARGIN_L = 48
_MARGIN_B = 40
_MARGIN_T = 28
_MARGIN_R = 12


class Panel:
    """One curve panel: x/y arrays plus labels; y is clipped to [0, 1]."""

    def __init__(self, title: str, xlabel: str, ylabel: str, x, y):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        if self.x.size != self.y.size or self.x.size < 1:
            raise ValueError("panel needs matching non-empty x and y")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi - lo <= 0:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _panel_svg(panel: Panel, ox: int) -> list[str]:
    px0 = ox + _MARGIN_L
    py0 = _PANEL_H - _MARGIN_B
    iw = _PANEL_W - _MARGIN_L - _MARGIN_R
    ih = _PANEL_H - _MARGIN_T - _MARGIN_B
    x_lo, x_hi = float(panel.x.min()), float(panel.x.max())
    if x_hi - x_lo <= 0:
        x_hi = x_lo + 1.0
    y = np.clip(panel.y, 0.0, 1.0)

    def sx(v: float) -> float:
        return px0 + (v - x_lo) / (x_hi - x_lo) * iw

    def sy(v: float) -> float:
        return py0 - v * ih

    parts = [
        f'<rect x="{px0}" y="{_MARGIN_T}" width="{iw}" height="{ih}" '
        'fill="white" stroke="#444" stroke-width="1"/>'
    ]
    for tick in _ticks(x_lo, x_hi):
        tx = sx(tick)
        parts.append(f'<line x1="{tx:.1f}" y1="{py0}" x2="{tx:.1f}" y2="{py0 + 4}" stroke="#444"/>')
        parts.append(
            f'<text x="{tx:.1f}" y="{py0 + 16}" font-size="9" text-anchor="middle">{tick:.2f}</text>'
        )
    for tick in _ticks(0.0, 1.0):
        ty = sy(tick)
        parts.append(f'<line x1="{px0 - 4}" y1="{ty:.1f}" x2="{px0}" y2="{ty:.1f}" stroke="#444"/>')
        parts.append(
            f'<text x="{px0 - 6}" y="{ty + 3:.1f}" font-size="9" text-anchor="end">{tick:.2f}</text>'
        )
        parts.append(
            f'<line x1="{px0}" y1="{ty:.1f}" x2="{px0 + iw}" y2="{ty:.1f}" '
            'stroke="#ddd" stroke-width="0.5"/>'
        )
    pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(panel.x, y))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>')
    parts.append(
        f'<text x="{px0 + iw / 2:.1f}" y="{_MARGIN_T - 10}" font-size="11" '
        f'text-anchor="middle" font-weight="bold">{panel.title}</text>'
    )
    parts.append(
        f'<text x="{px0 + iw / 2:.1f}" y="{_PANEL_H - 8}" font-size="10" '
        f'text-anchor="middle">{panel.xlabel}</text>'
    )
    parts.append(
        f'<text x="{ox + 12}" y="{_MARGIN_T + ih / 2:.1f}" font-size="10" text-anchor="middle" '
        f'transform="rotate(-90 {ox + 12} {_MARGIN_T + ih / 2:.1f})">{panel.ylabel}</text>'
    )
    return parts


def write_svg(path: str, panels: list[Panel]) -> None:
    """Write the panels side by side as one standalone SVG file."""
    if not panels:
        raise ValueError("need at least one panel")
    total_w = _PANEL_W * len(panels)
    body = []
    for i, panel in enumerate(panels):
        body.extend(_panel_svg(panel, i * _PANEL_W))
    svg = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{_PANEL_H}" '
        f'viewBox="0 0 {total_w} {_PANEL_H}">',
        f'<rect width="{total_w}" height="{_PANEL_H}" fill="#fafafa"/>',
        *body,
        "</svg>",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(svg) + "\n")
