"""Plain SVG rendering of planar matchings."""

from __future__ import annotations

import math
from typing import List, Optional, Tuple

import numpy as np

from .errors import UnsupportedDimensionError
from .matching import Matching
from .process import MarkedPointSet

Segment = Tuple[float, float, float, float]


def clip_segment(x0, y0, x1, y1, lo, hi) -> Optional[Segment]:
    """Liang-Barsky clip of a segment to the square ``[lo, hi]^2``."""
    dx, dy = x1 - x0, y1 - y0
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, x0 - lo), (dx, hi - x0), (-dy, y0 - lo), (dy, hi - y0)):
        if p == 0:
            if q < 0:
                return None
            continue
        t = q / p
        if p < 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return None
    return (x0 + t0 * dx, y0 + t0 * dy, x0 + t1 * dx, y0 + t1 * dy)


def edge_segments(p, q, side: float, periodic: bool) -> List[Segment]:
    """Segments drawing the edge ``p -- q``.

    On a torus an edge whose minimum image crosses the boundary becomes two
    pieces: ``p`` towards its image of ``q``, and the image of ``p`` towards
    ``q``, each clipped to the box.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if not periodic:
        return [(p[0], p[1], q[0], q[1])]
    delta = q - p
    delta -= side * np.round(delta / side)
    q_img = p + delta
    if np.all((q_img >= 0) & (q_img <= side)):
        return [(p[0], p[1], q_img[0], q_img[1])]
    p_img = q - delta
    out = []
    for a, b in ((p, q_img), (p_img, q)):
        seg = clip_segment(a[0], a[1], b[0], b[1], 0.0, side)
        if seg is not None:
            out.append(seg)
    return out


def _num(v: float) -> str:
    s = f"{v:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def render_svg(instance: MarkedPointSet, matching: Optional[Matching] = None,
               point_radius: float = None, stroke_width: float = None,
               edge_color: str = "#1f3b73", point_color: str = "#c0392b",
               background: str = "#ffffff") -> str:
    """SVG document of the points and edges; 1000 x 1000 units, viewBox = box."""
    box = instance.box
    if box.dimension != 2:
        raise UnsupportedDimensionError(f"rendering needs d=2, got d={box.dimension}")
    L = box.side
    if point_radius is None:
        point_radius = L / 400.0
    if stroke_width is None:
        stroke_width = L / 1000.0
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="1000" height="1000" '
        f'viewBox="0 0 {_num(L)} {_num(L)}">',
        f'<rect x="0" y="0" width="{_num(L)}" height="{_num(L)}" fill="{background}"/>',
    ]
    coords = instance.coords
    if matching is not None and len(matching):
        out.append(f'<g stroke="{edge_color}" stroke-width="{_num(stroke_width)}" '
                   f'stroke-linecap="round">')
        for a, b in zip(matching.i.tolist(), matching.j.tolist()):
            for x0, y0, x1, y1 in edge_segments(coords[a], coords[b], L, box.periodic):
                out.append(f'<line x1="{_num(x0)}" y1="{_num(y0)}" '
                           f'x2="{_num(x1)}" y2="{_num(y1)}"/>')
        out.append("</g>")
    if len(instance):
        out.append(f'<g fill="{point_color}">')
        for (x, y), deg in zip(coords.tolist(), instance.degrees.tolist()):
            r = point_radius * math.sqrt(deg)
            out.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="{_num(r)}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
