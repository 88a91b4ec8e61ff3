"""Training patch extraction.

Negative candidates sit on a stride-5 grid and are kept only when the whole
41x41 window is panel-free; positive candidates sit on a stride-3 grid with
the center pixel on a panel. A seeded 30% of the positives is retained and
each retained patch is emitted as four independently rotated copies.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import ShapeError, ValidationError

PATCH = 41
HALF = PATCH // 2
SUPER = 59  # rotation super-crop; circumradius of the 41x41 output fits inside
NEG_STRIDE = 5
POS_STRIDE = 3


@dataclass
class PatchSet:
    """Extracted patches with both label forms.

    ``classes`` follows the center-pixel rule; ``masks`` is the per-pixel
    ground truth aligned with each (possibly rotated) patch.
    """

    pixels: np.ndarray  # (N, 41, 41, 3) uint8
    classes: np.ndarray  # (N,) uint8
    masks: np.ndarray  # (N, 41, 41) uint8
    centers: np.ndarray  # (N, 2) int32, (row, col) in the source raster
    rotations: np.ndarray  # (N,) float64 degrees, 0.0 for unrotated

    def __len__(self) -> int:
        return len(self.pixels)


def _empty_set() -> PatchSet:
    return PatchSet(
        np.zeros((0, PATCH, PATCH, 3), np.uint8),
        np.zeros(0, np.uint8),
        np.zeros((0, PATCH, PATCH), np.uint8),
        np.zeros((0, 2), np.int32),
        np.zeros(0, np.float64),
    )


def concat_patch_sets(sets: list[PatchSet]) -> PatchSet:
    sets = [s for s in sets if len(s)] or [_empty_set()]
    return PatchSet(
        np.concatenate([s.pixels for s in sets]),
        np.concatenate([s.classes for s in sets]),
        np.concatenate([s.masks for s in sets]),
        np.concatenate([s.centers for s in sets]),
        np.concatenate([s.rotations for s in sets]),
    )


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def child_seed(seed, k: int) -> tuple:
    """Derive an independent rng seed; ``seed`` may be an int or int tuple."""
    return (tuple(seed) if isinstance(seed, (tuple, list)) else (seed,)) + (k,)


def _grid(dim: int, stride: int) -> np.ndarray:
    """In-margin center coordinates: HALF .. dim-HALF-1 at the given stride."""
    return np.arange(HALF, dim - HALF, stride, dtype=np.int64)


def _check_pair(raster: np.ndarray, mask: np.ndarray) -> None:
    if raster.ndim != 3 or raster.shape[2] != 3:
        raise ShapeError(f"raster must be (H, W, 3), got {raster.shape}")
    if mask.shape != raster.shape[:2]:
        raise ShapeError(f"mask {mask.shape} does not match raster {raster.shape[:2]}")
    if raster.shape[0] < PATCH or raster.shape[1] < PATCH:
        raise ValidationError(f"raster {raster.shape[:2]} smaller than a {PATCH}px patch")


def negative_candidates(mask: np.ndarray) -> np.ndarray:
    """(K, 2) stride-5 centers whose full window holds no panel pixel."""
    h, w = mask.shape
    csum = np.zeros((h + 1, w + 1), dtype=np.int64)
    csum[1:, 1:] = np.cumsum(np.cumsum(mask.astype(np.int64), axis=0), axis=1)
    rows = _grid(h, NEG_STRIDE)
    cols = _grid(w, NEG_STRIDE)
    r0 = rows - HALF
    c0 = cols - HALF
    r1 = rows + HALF + 1
    c1 = cols + HALF + 1
    window = (
        csum[np.ix_(r1, c1)]
        - csum[np.ix_(r0, c1)]
        - csum[np.ix_(r1, c0)]
        + csum[np.ix_(r0, c0)]
    )
    rr, cc = np.nonzero(window == 0)
    return np.stack([rows[rr], cols[cc]], axis=1)


def positive_candidates(mask: np.ndarray) -> np.ndarray:
    """(K, 2) stride-3 centers whose center pixel is a panel pixel."""
    h, w = mask.shape
    rows = _grid(h, POS_STRIDE)
    cols = _grid(w, POS_STRIDE)
    sub = mask[np.ix_(rows, cols)]
    rr, cc = np.nonzero(sub)
    return np.stack([rows[rr], cols[cc]], axis=1)


def _subsample(candidates: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    if k >= len(candidates):
        return candidates
    keep = np.sort(rng.choice(len(candidates), size=k, replace=False))
    return candidates[keep]


def sample_negatives(
    raster: np.ndarray,
    mask: np.ndarray,
    seed: int,
    fraction: float | None = None,
    count: int | None = None,
) -> PatchSet:
    """Panel-free patches; a seeded subsample of the stride-5 candidates.

    ``count`` wins over ``fraction``; with neither, all candidates are kept.
    Subsample sizes round half up; output stays in row-major center order.
    """
    _check_pair(raster, mask)
    cands = negative_candidates(mask)
    rng = np.random.default_rng(seed)
    if count is not None:
        cands = _subsample(cands, max(0, count), rng)
    elif fraction is not None:
        cands = _subsample(cands, round_half_up(fraction * len(cands)), rng)
    n = len(cands)
    out = _empty_set()
    if n == 0:
        return out
    pixels = np.empty((n, PATCH, PATCH, 3), np.uint8)
    for i, (r, c) in enumerate(cands):
        pixels[i] = raster[r - HALF : r + HALF + 1, c - HALF : c + HALF + 1]
    return PatchSet(
        pixels,
        np.zeros(n, np.uint8),
        np.zeros((n, PATCH, PATCH), np.uint8),
        cands.astype(np.int32),
        np.zeros(n, np.float64),
    )


def sample_positives(
    raster: np.ndarray,
    mask: np.ndarray,
    seed: int,
    keep_fraction: float = 0.3,
    copies: int = 4,
) -> PatchSet:
    """On-panel patches: seeded 30% retention, four rotated copies each."""
    _check_pair(raster, mask)
    cands = positive_candidates(mask)
    rng = np.random.default_rng(seed)
    kept = _subsample(cands, round_half_up(keep_fraction * len(cands)), rng)
    k = len(kept)
    if k == 0:
        return _empty_set()
    angles = rng.uniform(0.0, 360.0, size=(k, copies))
    n = k * copies
    pixels = np.empty((n, PATCH, PATCH, 3), np.uint8)
    masks = np.empty((n, PATCH, PATCH), np.uint8)
    centers = np.empty((n, 2), np.int32)
    rots = np.empty(n, np.float64)
    i = 0
    for j, (r, c) in enumerate(kept):
        for a in angles[j]:
            px, ms = rotate_crop(raster, mask, int(r), int(c), float(a))
            pixels[i] = px
            masks[i] = ms
            centers[i] = (r, c)
            rots[i] = a
            i += 1
    return PatchSet(pixels, np.ones(n, np.uint8), masks, centers, rots)


def rotate_crop(
    raster: np.ndarray, mask: np.ndarray, r: int, c: int, angle: float
) -> tuple[np.ndarray, np.ndarray]:
    """41x41 patch and mask crop rotated by ``angle`` degrees about the center.

    Bilinear for pixels, nearest for the mask; the rotation runs on a 59x59
    super-crop (reflected at raster edges) so the output corners carry real
    imagery, then the center 41x41 is cut.
    """
    if angle == 0.0:
        return (
            raster[r - HALF : r + HALF + 1, c - HALF : c + HALF + 1].copy(),
            mask[r - HALF : r + HALF + 1, c - HALF : c + HALF + 1].copy(),
        )
    sh = SUPER // 2
    sup_px = _padded_crop(raster, r, c, sh)
    sup_ms = _padded_crop(mask, r, c, sh)
    rot_px = ndimage.rotate(
        sup_px.astype(np.float32), angle, reshape=False, order=1, mode="reflect"
    )
    rot_ms = ndimage.rotate(sup_ms, angle, reshape=False, order=0, mode="reflect")
    lo = sh - HALF
    hi = lo + PATCH
    px = np.clip(np.rint(rot_px[lo:hi, lo:hi]), 0, 255).astype(np.uint8)
    return px, rot_ms[lo:hi, lo:hi].astype(np.uint8)


def _padded_crop(img: np.ndarray, r: int, c: int, half: int) -> np.ndarray:
    h, w = img.shape[:2]
    r0, r1 = r - half, r + half + 1
    c0, c1 = c - half, c + half + 1
    crop = img[max(r0, 0) : min(r1, h), max(c0, 0) : min(c1, w)]
    pw = [(max(0, -r0), max(0, r1 - h)), (max(0, -c0), max(0, c1 - w))]
    if img.ndim == 3:
        pw.append((0, 0))
    if any(p != (0, 0) for p in pw):
        crop = np.pad(crop, pw, mode="reflect")
    return crop


def extract_patches(
    raster: np.ndarray,
    mask: np.ndarray,
    seed: int,
    keep_fraction: float = 0.3,
    copies: int = 4,
    neg_per_pos: float = 3.0,
) -> PatchSet:
    """Positives then negatives for one raster, negatives sized for the
    configured class mix (3:1 gives the canonical 75/25)."""
    pos = sample_positives(raster, mask, child_seed(seed, 0), keep_fraction, copies)
    neg = sample_negatives(
        raster, mask, child_seed(seed, 1), count=round_half_up(neg_per_pos * len(pos))
    )
    return concat_patch_sets([neg, pos])


def split_validation(
    raster_ids: list[str], fraction: float = 0.10, seed: int = 0
) -> tuple[list[str], list[str]]:
    """Hold out whole rasters: returns (train_ids, validation_ids)."""
    if not raster_ids:
        raise ValidationError("cannot split an empty raster list")
    k = round_half_up(fraction * len(raster_ids))
    order = np.random.default_rng(seed).permutation(len(raster_ids))
    val = {raster_ids[i] for i in order[:k]}
    return [r for r in raster_ids if r not in val], sorted(val)
