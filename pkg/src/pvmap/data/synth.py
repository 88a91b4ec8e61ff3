"""Synthetic aerial scenes: textured background with dark rectangular arrays.

A desk-scale stand-in for real imagery. Panels are randomly placed, rotated
rectangles recorded as polygon annotations; the drawn pixels coincide exactly
with the rasterized annotation so labels are pixel-true.
"""

import numpy as np
from scipy import ndimage

from ..errors import ValidationError
from .geometry import rasterize

_PLACEMENT_TRIES = 200


def synth_scene(
    seed: int,
    dims: tuple[int, int] = (256, 256),
    panel_count: int = 5,
    side_range: tuple[float, float] = (3.0, 20.0),
    min_gap: int = 5,
):
    """Build one scene. Returns (raster uint8 (H, W, 3), polygons).

    Panels never overlap and keep ``min_gap`` pixels of clearance so nearby
    arrays stay separable. Placement that cannot satisfy this within a
    bounded number of retries raises.
    """
    h, w = dims
    if h < 128 or w < 128:
        raise ValidationError(f"scene dims {dims} below the 128x128 minimum")
    rng = np.random.default_rng(seed)
    raster = _background(rng, h, w)

    occupied = np.zeros((h, w), dtype=bool)
    polygons = []
    for _ in range(panel_count):
        placed = False
        for _ in range(_PLACEMENT_TRIES):
            poly = _random_rect(rng, h, w, side_range)
            if poly is None:
                continue
            pm = rasterize([poly], (h, w)).astype(bool)
            if not pm.any():
                continue
            near = ndimage.binary_dilation(pm, iterations=min_gap)
            if (near & occupied).any():
                continue
            occupied |= pm
            polygons.append(poly)
            _paint_panel(rng, raster, pm)
            placed = True
            break
        if not placed:
            raise ValidationError(
                f"could not place {panel_count} non-overlapping panels in {w}x{h}"
            )
    return raster, polygons


def _background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    base = rng.uniform(100, 170, size=3)
    field = np.zeros((h, w))
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(6):  # low-frequency blobs
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        sig = rng.uniform(15, 60)
        amp = rng.uniform(-35, 35)
        field += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sig * sig))
    img = base[None, None, :] + field[:, :, None]
    img = img + rng.normal(0, 7, size=(h, w, 3))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _random_rect(rng: np.random.Generator, h, w, side_range):
    sa = rng.uniform(*side_range)
    sb = rng.uniform(*side_range)
    angle = rng.uniform(0, 360)
    cy = rng.uniform(0, h)
    cx = rng.uniform(0, w)
    t = np.deg2rad(angle)
    ux = np.array([np.cos(t), np.sin(t)]) * (sa / 2)
    uy = np.array([-np.sin(t), np.cos(t)]) * (sb / 2)
    center = np.array([cx, cy])
    poly = np.array([center + ux + uy, center - ux + uy, center - ux - uy, center + ux - uy])
    margin = 2.0
    if (
        poly[:, 0].min() < margin
        or poly[:, 0].max() > w - margin
        or poly[:, 1].min() < margin
        or poly[:, 1].max() > h - margin
    ):
        return None
    return poly


def _paint_panel(rng: np.random.Generator, raster: np.ndarray, pm: np.ndarray) -> None:
    shade = rng.uniform(15, 55, size=3)
    noise = rng.normal(0, 4, size=(int(pm.sum()), 3))
    raster[pm] = np.clip(np.rint(shade[None, :] + noise), 0, 255).astype(np.uint8)
