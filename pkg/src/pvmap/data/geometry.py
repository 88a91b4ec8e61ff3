"""Polygon rasterization.

Coordinates are (x, y) in pixel units; the pixel at row r, column c has its
center at (c + 0.5, r + 0.5). A pixel belongs to a polygon iff its center is
inside under the even-odd rule, evaluated with a half-open scanline so shared
edges never double-fill or leave gaps.
"""

import math

import numpy as np

from ..errors import ValidationError


def validate_polygons(polygons, dims: tuple[int, int]) -> None:
    """Reject polygons with out-of-bounds vertices, < 3 vertices, or
    self-intersections."""
    h, w = dims
    for p, poly in enumerate(polygons):
        poly = np.asarray(poly, dtype=float)
        if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
            raise ValidationError(f"polygon {p}: need at least 3 (x, y) vertices")
        if (poly[:, 0] < 0).any() or (poly[:, 0] > w).any() or (
            poly[:, 1] < 0
        ).any() or (poly[:, 1] > h).any():
            raise ValidationError(f"polygon {p}: vertex outside {w}x{h} raster")
        if _self_intersects(poly):
            raise ValidationError(f"polygon {p}: edges self-intersect")


def rasterize(polygons, dims: tuple[int, int]) -> np.ndarray:
    """Binary (H, W) uint8 mask: 1 where a pixel center falls in any polygon."""
    h, w = dims
    mask = np.zeros((h, w), dtype=np.uint8)
    for poly in polygons:
        poly = np.asarray(poly, dtype=float)
        if len(poly) < 3:
            raise ValidationError("polygon needs at least 3 vertices")
        if (poly[:, 0] < 0).any() or (poly[:, 0] > w).any() or (
            poly[:, 1] < 0
        ).any() or (poly[:, 1] > h).any():
            raise ValidationError(f"polygon vertex outside {w}x{h} raster")
        _fill(mask, poly)
    return mask


def _fill(mask: np.ndarray, poly: np.ndarray) -> None:
    h, w = mask.shape
    ys = poly[:, 1]
    r0 = max(0, int(math.floor(ys.min() - 0.5)))
    r1 = min(h - 1, int(math.ceil(ys.max())))
    nv = len(poly)
    for r in range(r0, r1 + 1):
        y = r + 0.5
        xs = []
        for i in range(nv):
            x1, y1 = poly[i]
            x2, y2 = poly[(i + 1) % nv]
            if y1 == y2:
                continue
            # half-open span: the lower endpoint counts, the upper does not
            if (y1 <= y < y2) or (y2 <= y < y1):
                xs.append(x1 + (y - y1) * (x2 - x1) / (y2 - y1))
        xs.sort()
        for k in range(0, len(xs) - 1, 2):
            c0 = max(0, int(math.ceil(xs[k] - 0.5)))
            c1 = min(w, int(math.ceil(xs[k + 1] - 0.5)))
            if c1 > c0:
                mask[r, c0:c1] = 1


def _self_intersects(poly: np.ndarray) -> bool:
    n = len(poly)
    for i in range(n):
        a1, a2 = poly[i], poly[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # adjacent edges share a vertex by construction
            b1, b2 = poly[j], poly[(j + 1) % n]
            if _segments_cross(a1, a2, b1, b2):
                return True
    return False


def _segments_cross(a1, a2, b1, b2) -> bool:
    d1 = _orient(b1, b2, a1)
    d2 = _orient(b1, b2, a2)
    d3 = _orient(a1, a2, b1)
    d4 = _orient(a1, a2, b2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and all(
        d != 0 for d in (d1, d2, d3, d4)
    )


def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
