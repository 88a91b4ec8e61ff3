"""Dense tiled inference and Gaussian-weighted stitching.

Patches are taken at stride 10 across the raster (with edge-snapped final
offsets so every pixel is covered), predicted independently, and blended by
a per-pixel weighted average using an unnormalized Gaussian window centered
on each patch. Classifier tiles broadcast their scalar probability so both
detectors share the blender.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ShapeError, ValidationError
from .models import PATCH_SIZE, SCALAR_OUTPUT
from .train import predict_proba

STRIDE = 10
GAUSSIAN_SIGMA = 10.0
PMAP_MAGIC = b"PMAP01"


@dataclass
class TilePlan:
    """Row-major (row, col) top-left offsets of every 41x41 tile."""

    dims: tuple[int, int]
    offsets: np.ndarray  # (T, 2) int64


def axis_offsets(dim: int, patch: int = PATCH_SIZE, stride: int = STRIDE) -> np.ndarray:
    offs = list(range(0, dim - patch + 1, stride))
    if offs[-1] != dim - patch:
        offs.append(dim - patch)  # snap a final tile to the edge
    return np.asarray(offs, dtype=np.int64)


def plan_tiles(dims: tuple[int, int], patch: int = PATCH_SIZE, stride: int = STRIDE) -> TilePlan:
    h, w = dims
    if h < patch or w < patch:
        raise ValidationError(f"raster {dims} smaller than a {patch}px patch")
    rows = axis_offsets(h, patch, stride)
    cols = axis_offsets(w, patch, stride)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return TilePlan(dims, np.stack([rr.ravel(), cc.ravel()], axis=1))


def gaussian_window(sigma: float = GAUSSIAN_SIGMA, patch: int = PATCH_SIZE) -> np.ndarray:
    """Unnormalized 2-D Gaussian over the patch support, peak at the center."""
    if sigma <= 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    half = (patch - 1) / 2.0
    d = np.arange(patch, dtype=np.float64) - half
    g = np.exp(-(d * d) / (2.0 * sigma * sigma))
    return np.outer(g, g)


def predict_tiles(
    net,
    raster: np.ndarray,
    plan: TilePlan,
    batch_size: int = 256,
    threads: int = 1,
) -> np.ndarray:
    """(T, 41, 41) float64 prediction per tile, in plan order.

    Scalar-output networks broadcast their probability across the tile.
    Batches are formed by tile index, so results do not depend on the
    thread count.
    """
    if raster.shape[:2] != plan.dims:
        raise ShapeError(f"raster {raster.shape[:2]} does not match plan {plan.dims}")
    p = PATCH_SIZE
    tiles = np.empty((len(plan.offsets), p, p, 3), dtype=np.uint8)
    for i, (r, c) in enumerate(plan.offsets):
        tiles[i] = raster[r : r + p, c : c + p]

    starts = list(range(0, len(tiles), batch_size))

    if threads > 1 and len(starts) > 1:
        from concurrent.futures import ThreadPoolExecutor

        # each worker forwards on its own clone; batch boundaries are fixed
        # by tile index, so the thread count cannot change any output
        nets = [net.inference_clone() for _ in range(threads)]
        groups = [starts[g::threads] for g in range(threads)]

        def run_group(g: int) -> list[tuple[int, np.ndarray]]:
            return [
                (s, predict_proba(nets[g], tiles[s : s + batch_size], batch_size))
                for s in groups[g]
            ]

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = [r for grp in pool.map(run_group, range(threads)) for r in grp]
        chunks = [arr for _, arr in sorted(results, key=lambda t: t[0])]
    else:
        chunks = [predict_proba(net, tiles[s : s + batch_size], batch_size) for s in starts]
    probs = np.concatenate(chunks, axis=0).astype(np.float64)
    if net.spec.output_kind == SCALAR_OUTPUT:
        probs = np.broadcast_to(probs[:, None, None], (len(tiles), p, p)).copy()
    return probs


def blend(
    tiles: np.ndarray,
    plan: TilePlan,
    window: np.ndarray | None = None,
) -> np.ndarray:
    """Per-pixel weighted average of overlapping tiles, in double precision.

    Accumulation follows row-major tile order, making the result exactly
    reproducible regardless of how the tiles were predicted.
    """
    if len(tiles) != len(plan.offsets):
        raise ShapeError(f"{len(tiles)} tiles for {len(plan.offsets)} planned offsets")
    if window is None:
        window = gaussian_window()
    h, w = plan.dims
    p = window.shape[0]
    num = np.zeros((h, w), dtype=np.float64)
    den = np.zeros((h, w), dtype=np.float64)
    cover = np.zeros((h, w), dtype=np.int32)
    sole = np.zeros((h, w), dtype=np.float64)
    for t, (r, c) in enumerate(plan.offsets):
        num[r : r + p, c : c + p] += window * tiles[t]
        den[r : r + p, c : c + p] += window
        cover[r : r + p, c : c + p] += 1
        sole[r : r + p, c : c + p] = tiles[t]
    # a pixel seen by exactly one tile takes that prediction verbatim; the
    # quotient only rounds, and single-tile rasters must come back bit-exact
    return np.where(cover == 1, sole, num / np.where(den > 0, den, 1.0))


def predict_map(
    net,
    raster: np.ndarray,
    sigma: float = GAUSSIAN_SIGMA,
    stride: int = STRIDE,
    batch_size: int = 256,
    threads: int = 1,
) -> np.ndarray:
    """Full pipeline: plan, predict, blend. Returns an (H, W) float64 map."""
    plan = plan_tiles(raster.shape[:2], stride=stride)
    tiles = predict_tiles(net, raster, plan, batch_size=batch_size, threads=threads)
    return blend(tiles, plan, gaussian_window(sigma))


def save_pmap(path, pmap: np.ndarray) -> None:
    """Exact binary form: magic, u64 H, u64 W, row-major float32 LE."""
    if pmap.ndim != 2:
        raise ShapeError(f"probability map must be 2-D, got {pmap.shape}")
    with open(path, "wb") as f:
        f.write(PMAP_MAGIC)
        f.write(struct.pack("<QQ", *pmap.shape))
        f.write(pmap.astype("<f4").tobytes())


def load_pmap(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[: len(PMAP_MAGIC)] != PMAP_MAGIC:
        raise ValidationError(f"{path}: not a PMAP01 file")
    h, w = struct.unpack_from("<QQ", data, len(PMAP_MAGIC))
    body = data[len(PMAP_MAGIC) + 16 :]
    if len(body) != 4 * h * w:
        raise ValidationError(f"{path}: expected {4 * h * w} payload bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float64)


def save_pmap_png(path, pmap: np.ndarray) -> None:
    """16-bit grayscale interchange image: value = round(65535 * c)."""
    arr = np.rint(np.clip(pmap, 0.0, 1.0) * 65535.0).astype(np.uint16)
    Image.fromarray(arr).save(path, format="PNG")
