"""Static SVG figures: route maps and depot density heatmaps."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .depots import DepotDistribution
from .instance import Instance
from .solution import RoutePlan

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2", "#7f7f7f"]
# a short perceptual ramp (dark blue -> green -> yellow)
_RAMP = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], dtype=float)


def _ramp(t: float) -> str:
    t = min(max(t, 0.0), 1.0) * (len(_RAMP) - 1)
    i = min(int(t), len(_RAMP) - 2)
    c = _RAMP[i] + (t - i) * (_RAMP[i + 1] - _RAMP[i])
    return "#%02x%02x%02x" % tuple(int(round(v)) for v in c)


def _frame(size: int, body: list[str], title: str | None) -> str:
    head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
            f'viewBox="0 0 {size} {size}">']
    if title:
        head.append(f"<title>{escape(title)}</title>")
    return "\n".join(head + body + ["</svg>"]) + "\n"


def route_map_svg(instance: Instance, plan: RoutePlan, size: int = 500, title: str | None = None) -> str:
    """Customers as dots, depots as squares, one colour per depot."""
    xy = instance.coords
    lo = xy.min(axis=0)
    span = float((xy.max(axis=0) - lo).max()) or 1.0
    pad = 20
    scale = (size - 2 * pad) / span

    def pt(v):
        x, y = (xy[v] - lo) * scale + pad
        return x, size - y  # y axis up

    m = instance.m
    body = [f'<rect width="{size}" height="{size}" fill="white"/>']
    for r in plan.routes:
        colour = PALETTE[r.depot % len(PALETTE)]
        pts = [pt(r.depot)] + [pt(s + m) for s in r.stops] + [pt(r.depot)]
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        body.append(f'<polyline points="{coords}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
    for c in range(instance.n):
        x, y = pt(c + m)
        body.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="black"/>')
    for k in range(m):
        x, y = pt(k)
        colour = PALETTE[k % len(PALETTE)]
        body.append(f'<rect x="{x - 5:.2f}" y="{y - 5:.2f}" width="10" height="10" fill="{colour}" stroke="black"/>')
    return _frame(size, body, title)


def density_grid(dist: DepotDistribution, resolution: int = 200) -> np.ndarray:
    """Density of the sigmoid-mapped depot positions on the unit square.

    Each depot contributes its logit-normal marginal; the grid holds their
    sum at cell centres, indexed ``[row, col]`` with row 0 at ``y`` near 0.
    """
    t = (np.arange(resolution) + 0.5) / resolution
    gx, gy = np.meshgrid(t, t)  # gx varies along columns
    lx, ly = np.log(gx / (1 - gx)), np.log(gy / (1 - gy))
    jac = 1.0 / (gx * (1 - gx) * gy * (1 - gy))
    total = np.zeros_like(gx)
    for k in range(dist.m):
        mu, cov = dist.marginal(k)
        inv = np.linalg.inv(cov)
        dx, dy = lx - mu[0], ly - mu[1]
        quad = inv[0, 0] * dx * dx + 2 * inv[0, 1] * dx * dy + inv[1, 1] * dy * dy
        norm = 1.0 / (2 * np.pi * np.sqrt(np.linalg.det(cov)))
        total += norm * np.exp(-0.5 * quad) * jac
    return total


def heatmap_svg(dist: DepotDistribution, resolution: int = 200, size: int = 400,
                instance: Instance | None = None, title: str | None = None) -> str:
    grid = density_grid(dist, resolution)
    peak = float(grid.max()) or 1.0
    cell = size / resolution
    body = []
    for i in range(resolution):
        y = size - (i + 1) * cell
        for j in range(resolution):
            body.append(f'<rect x="{j * cell:.3f}" y="{y:.3f}" width="{cell:.3f}" height="{cell:.3f}" '
                        f'fill="{_ramp(grid[i, j] / peak)}"/>')
    if instance is not None:
        for x, yy in instance.customer_xy:
            body.append(f'<circle cx="{x * size:.2f}" cy="{size - yy * size:.2f}" r="2.5" fill="white" stroke="black"/>')
    return _frame(size, body, title)


def heatmap_peak(dist: DepotDistribution, resolution: int = 200) -> tuple[float, float]:
    """Unit-square coordinates of the grid cell with the highest density."""
    grid = density_grid(dist, resolution)
    i, j = np.unravel_index(int(np.argmax(grid)), grid.shape)
    return ((j + 0.5) / resolution, (i + 0.5) / resolution)
