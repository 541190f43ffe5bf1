"""Marching-squares contour extraction and dependency-free SVG rendering.

Contours are polylines where the bilinearly interpolated grid crosses a
level; they are either closed or terminate on the grid boundary.  The
SVG writer draws the level sets with eigenvalue markers and a stability
overlay (imaginary axis or unit circle), producing small, diffable
vector files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .numerics import PseudospectrumGrid

__all__ = ["marching_squares", "ContourRendering", "default_levels", "render_svg"]


def default_levels() -> np.ndarray:
    """Six log-spaced contour levels between 10^-1.5 and 10^-0.25."""
    return np.logspace(-1.5, -0.25, 6)


def _edge_point(p1, p2, v1, v2, level):
    t = (level - v1) / (v2 - v1)
    return (p1[0] + t * (p2[0] - p1[0]), p1[1] + t * (p2[1] - p1[1]))


# segment endpoints per marching-squares case, as pairs of edge ids
# edges: 0 = bottom, 1 = right, 2 = top, 3 = left
_CASES = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)],
    6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)], 9: [(2, 0)],
    11: [(2, 1)], 12: [(1, 3)], 13: [(1, 0)], 14: [(0, 3)],
}


def marching_squares(grid: PseudospectrumGrid, level: float) -> list[np.ndarray]:
    """Polylines along which the bilinear grid interpolant equals ``level``.

    Saddle cells (cases 5 and 10) are disambiguated by the cell-center
    value.  Segments are chained into polylines; each returned array has
    shape (k, 2) with columns (re, im).
    """
    if level <= 0:
        raise ValueError("contour level must be positive")
    xs, ys = grid.re_axis, grid.im_axis
    # values exactly at the level would put vertices on grid nodes shared by
    # four cells, breaking the chain; nudge them consistently upward
    v = np.where(grid.values == level, level * (1.0 + 1e-12), grid.values)
    segments: list[tuple[tuple[float, float], tuple[float, float]]] = []
    for i in range(ys.size - 1):
        for j in range(xs.size - 1):
            va, vb = v[i, j], v[i, j + 1]
            vc, vd = v[i + 1, j + 1], v[i + 1, j]
            case = ((va >= level) | ((vb >= level) << 1)
                    | ((vc >= level) << 2) | ((vd >= level) << 3))
            if case in (0, 15):
                continue
            pa, pb = (xs[j], ys[i]), (xs[j + 1], ys[i])
            pc, pd = (xs[j + 1], ys[i + 1]), (xs[j], ys[i + 1])
            edge_pts = {}
            if (va >= level) != (vb >= level):
                edge_pts[0] = _edge_point(pa, pb, va, vb, level)
            if (vb >= level) != (vc >= level):
                edge_pts[1] = _edge_point(pb, pc, vb, vc, level)
            if (vd >= level) != (vc >= level):
                edge_pts[2] = _edge_point(pd, pc, vd, vc, level)
            if (va >= level) != (vd >= level):
                edge_pts[3] = _edge_point(pa, pd, va, vd, level)
            if case in (5, 10):
                center_above = (va + vb + vc + vd) / 4.0 >= level
                if case == 5:  # corners a, c above
                    pairs = [(3, 2), (0, 1)] if center_above else [(3, 0), (2, 1)]
                else:          # corners b, d above
                    pairs = [(0, 3), (1, 2)] if center_above else [(0, 1), (3, 2)]
            else:
                pairs = _CASES[case]
            for e1, e2 in pairs:
                segments.append((edge_pts[e1], edge_pts[e2]))

    return _chain_segments(segments, xs, ys)


def _chain_segments(segments, xs, ys) -> list[np.ndarray]:
    if not segments:
        return []
    scale = max(xs[-1] - xs[0], ys[-1] - ys[0])
    eps = scale * 1e-9

    def key(p):
        return (round(p[0] / eps), round(p[1] / eps))

    # zero-length segments arise where a contour grazes a grid node
    segments = [(p, q) for p, q in segments if key(p) != key(q)]
    if not segments:
        return []

    # adjacency: point key -> list of (segment index, end index)
    links: dict[tuple, list[tuple[int, int]]] = {}
    for si, (p, q) in enumerate(segments):
        links.setdefault(key(p), []).append((si, 0))
        links.setdefault(key(q), []).append((si, 1))

    used = [False] * len(segments)
    polylines = []
    for start in range(len(segments)):
        if used[start]:
            continue
        used[start] = True
        chain = [segments[start][0], segments[start][1]]
        # extend forward then backward
        for forward in (True, False):
            while True:
                tip = chain[-1] if forward else chain[0]
                cands = [(si, ei) for si, ei in links.get(key(tip), []) if not used[si]]
                if not cands:
                    break
                si, ei = cands[0]
                used[si] = True
                nxt = segments[si][1 - ei]
                if forward:
                    chain.append(nxt)
                else:
                    chain.insert(0, nxt)
        polylines.append(np.array(chain))
    return polylines


# a compact dark-to-light sequential palette for level coloring
_PALETTE = ["#440154", "#414487", "#2a788e", "#22a884", "#7ad151", "#fde725",
            "#f98e09", "#d84c3e"]


@dataclass(frozen=True)
class ContourRendering:
    """A grid with the contour levels and overlays to draw."""

    grid: PseudospectrumGrid
    levels: np.ndarray = field(default_factory=default_levels)
    overlay_points: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=complex))
    overlay_curve: str = "none"  # "axis", "circle", or "none"

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        if levels.ndim != 1 or levels.size == 0:
            raise ValueError("levels must be a nonempty 1-D array")
        if np.any(levels <= 0) or np.any(np.diff(levels) <= 0):
            raise ValueError("levels must be positive and strictly increasing")
        if self.overlay_curve not in ("axis", "circle", "none"):
            raise ValueError("overlay_curve must be 'axis', 'circle', or 'none'")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "overlay_points",
                           np.asarray(self.overlay_points, dtype=complex).reshape(-1))


def render_svg(rendering: ContourRendering, path, size: int = 640,
               title: str | None = None) -> None:
    """Write the rendering as a standalone SVG file."""
    grid = rendering.grid
    x0, x1 = grid.re_axis[0], grid.re_axis[-1]
    y0, y1 = grid.im_axis[0], grid.im_axis[-1]
    margin = 42.0
    w = h = float(size)
    sx = (w - 2 * margin) / (x1 - x0)
    sy = (h - 2 * margin) / (y1 - y0)

    def tx(x):
        return margin + (x - x0) * sx

    def ty(y):
        return h - margin - (y - y0) * sy  # SVG y grows downward

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.0f} {h:.0f}">',
        f'<rect x="0" y="0" width="{w:.0f}" height="{h:.0f}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{w - 2 * margin:.2f}" '
        f'height="{h - 2 * margin:.2f}" fill="none" stroke="black" stroke-width="1"/>',
    ]
    if title:
        parts.append(f'<text x="{w / 2:.1f}" y="{margin - 14:.1f}" font-size="13" '
                     f'text-anchor="middle" font-family="sans-serif">{title}</text>')
    # corner labels
    parts.append(f'<text x="{margin:.1f}" y="{h - margin + 16:.1f}" font-size="10" '
                 f'font-family="sans-serif">{x0:g}</text>')
    parts.append(f'<text x="{w - margin:.1f}" y="{h - margin + 16:.1f}" font-size="10" '
                 f'text-anchor="end" font-family="sans-serif">{x1:g}</text>')
    parts.append(f'<text x="{margin - 4:.1f}" y="{h - margin:.1f}" font-size="10" '
                 f'text-anchor="end" font-family="sans-serif">{y0:g}</text>')
    parts.append(f'<text x="{margin - 4:.1f}" y="{margin + 4:.1f}" font-size="10" '
                 f'text-anchor="end" font-family="sans-serif">{y1:g}</text>')

    for li, level in enumerate(rendering.levels):
        color = _PALETTE[li % len(_PALETTE)]
        for line in marching_squares(grid, float(level)):
            pts = " ".join(f"{tx(px):.2f},{ty(py):.2f}" for px, py in line)
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                         f'stroke-width="1.2"><title>eps={level:.4g}</title></polyline>')

    if rendering.overlay_curve == "axis":
        parts.append(f'<line x1="{tx(0.0):.2f}" y1="{ty(y0):.2f}" x2="{tx(0.0):.2f}" '
                     f'y2="{ty(y1):.2f}" stroke="magenta" stroke-width="1.2" '
                     f'stroke-dasharray="4,3"/>')
    elif rendering.overlay_curve == "circle":
        rx = abs(sx)
        ry = abs(sy)
        parts.append(f'<ellipse cx="{tx(0.0):.2f}" cy="{ty(0.0):.2f}" rx="{rx:.2f}" '
                     f'ry="{ry:.2f}" fill="none" stroke="magenta" stroke-width="1.2" '
                     f'stroke-dasharray="4,3"/>')

    for z in rendering.overlay_points:
        x, y = float(np.real(z)), float(np.imag(z))
        if x0 <= x <= x1 and y0 <= y <= y1:
            parts.append(f'<circle cx="{tx(x):.2f}" cy="{ty(y):.2f}" r="2.4" fill="red"/>')

    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
