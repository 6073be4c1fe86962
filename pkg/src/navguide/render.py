"""SVG rendering of candidate paths over a cost map.

Output is plain text with fixed number formatting so equal inputs give
equal bytes. Guided paths are red, unguided paths blue.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .costmap import CostMap
from .geometry import Pose

GUIDED_COLOR = "#d62728"
UNGUIDED_COLOR = "#1f77b4"


def _f(x: float) -> str:
    return f"{x:.3f}"


def render_svg(cmap: CostMap, guided: Sequence[np.ndarray] = (), unguided: Sequence[np.ndarray] = (),
               goal=None, pose: Pose | None = None, px_per_m: float = 40.0, min_cost: float = 1e-3) -> str:
    """Draw cost-map cells, world-frame path polylines, the goal and the robot."""
    s = cmap.spec
    w_m, h_m = s.width * s.resolution, s.height * s.resolution
    ox, oy = s.origin
    W, H = w_m * px_per_m, h_m * px_per_m

    def xy(p) -> tuple[float, float]:
        return (p[0] - ox) * px_per_m, H - (p[1] - oy) * px_per_m

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(W)}" height="{_f(H)}" '
        f'viewBox="0 0 {_f(W)} {_f(H)}">',
        f'<rect class="background" x="0" y="0" width="{_f(W)}" height="{_f(H)}" fill="#ffffff"/>',
        '<g class="costmap" fill="#000000" stroke="none">',
    ]
    cell = s.resolution * px_per_m
    iy, ix = np.nonzero(cmap.values > min_cost)
    for r, c in zip(iy.tolist(), ix.tolist()):
        x, y = c * cell, H - (r + 1) * cell
        out.append(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(cell)}" height="{_f(cell)}" '
                   f'fill-opacity="{cmap.values[r, c]:.3f}"/>')
    out.append("</g>")
    for cls, color, paths in (("unguided", UNGUIDED_COLOR, unguided), ("guided", GUIDED_COLOR, guided)):
        out.append(f'<g class="{cls}" fill="none" stroke="{color}" stroke-width="1.5" stroke-opacity="0.6">')
        for path in paths:
            pts = " ".join("{},{}".format(*map(_f, xy(p))) for p in np.asarray(path, dtype=float))
            out.append(f'<polyline points="{pts}"/>')
        out.append("</g>")
    if goal is not None:
        gx, gy = xy(goal)
        out.append(f'<circle class="goal" cx="{_f(gx)}" cy="{_f(gy)}" r="{_f(0.2 * px_per_m)}" '
                   'fill="#2ca02c" stroke="#000000"/>')
    if pose is not None:
        size = 0.3 * px_per_m
        corners = [(1.0, 0.0), (-0.6, 0.5), (-0.6, -0.5)]
        c, sn = math.cos(pose.heading), math.sin(pose.heading)
        px, py = xy(pose.position)
        pts = " ".join(f"{_f(px + size * (a * c - b * sn))},{_f(py - size * (a * sn + b * c))}"
                       for a, b in corners)
        out.append(f'<polygon class="robot" points="{pts}" fill="#ff7f0e" stroke="#000000"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
