"""Discrete PV-array detections from a probability map.

Pixels with confidence >= 0.5 are panel pixels; 8-connected groups of them
become detections, each scored by the mean probability of its member pixels.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ShapeError, ValidationError

DEFAULT_THRESHOLD = 0.5


@dataclass
class DetectedObject:
    pixels: np.ndarray  # (K, 2) int32 (row, col), row-major order
    confidence: float
    bbox: tuple[int, int, int, int]  # min_row, min_col, max_row, max_col inclusive
    area: int

    def first_pixel_index(self, width: int) -> int:
        return int(self.pixels[0, 0]) * width + int(self.pixels[0, 1])


def threshold_map(pmap: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Binary mask of pixels with confidence >= threshold (inclusive)."""
    if pmap.ndim != 2:
        raise ShapeError(f"probability map must be 2-D, got {pmap.shape}")
    return (pmap >= threshold).astype(np.uint8)


def connected_components(mask: np.ndarray) -> list[np.ndarray]:
    """Maximal 8-connected groups of 1-pixels as (K, 2) coordinate arrays.

    Ordered by each component's first pixel in a row-major scan; pixels
    within a component are row-major too.
    """
    if mask.ndim != 2:
        raise ShapeError(f"mask must be 2-D, got {mask.shape}")
    labels, count = kernels.label_components(np.ascontiguousarray(mask, dtype=np.uint8))
    if count == 0:
        return []
    rr, cc = np.nonzero(labels)
    labs = labels[rr, cc]
    order = np.argsort(labs, kind="stable")  # stable keeps row-major order per label
    coords = np.stack([rr[order], cc[order]], axis=1).astype(np.int32)
    sizes = np.bincount(labs)[1:]
    return list(np.split(coords, np.cumsum(sizes)[:-1]))


def extract_objects(
    pmap: np.ndarray, threshold: float = DEFAULT_THRESHOLD
) -> list[DetectedObject]:
    """Detections sorted by descending confidence, ties by first pixel."""
    mask = threshold_map(pmap, threshold)
    comps = connected_components(mask)
    w = pmap.shape[1]
    objs = []
    for pix in comps:
        conf = float(pmap[pix[:, 0], pix[:, 1]].mean())
        bbox = (
            int(pix[:, 0].min()),
            int(pix[:, 1].min()),
            int(pix[:, 0].max()),
            int(pix[:, 1].max()),
        )
        objs.append(DetectedObject(pix, conf, bbox, len(pix)))
    objs.sort(key=lambda o: (-o.confidence, o.first_pixel_index(w)))
    return objs


def _rle_encode(pix: np.ndarray, width: int) -> list[list[int]]:
    flat = pix[:, 0].astype(np.int64) * width + pix[:, 1]
    runs = []
    start = prev = int(flat[0])
    for v in flat[1:]:
        v = int(v)
        if v == prev + 1:
            prev = v
            continue
        runs.append([start, prev - start + 1])
        start = prev = v
    runs.append([start, prev - start + 1])
    return runs


def _rle_decode(runs: list[list[int]], width: int) -> np.ndarray:
    flat = np.concatenate([np.arange(s, s + n, dtype=np.int64) for s, n in runs])
    return np.stack([flat // width, flat % width], axis=1).astype(np.int32)


def write_detections(path, objects: list[DetectedObject], dims: tuple[int, int]) -> None:
    """JSON lines, one detection per line, pixel sets run-length encoded."""
    h, w = dims
    with open(path, "w") as f:
        for o in objects:
            f.write(
                json.dumps(
                    {
                        "confidence": o.confidence,
                        "bbox": list(o.bbox),
                        "area": o.area,
                        "dims": [h, w],
                        "rle": _rle_encode(o.pixels, w),
                    }
                )
                + "\n"
            )


def read_detections(path) -> tuple[list[DetectedObject], tuple[int, int] | None]:
    objects = []
    dims = None
    for ln, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}:{ln + 1}: bad JSON ({e})") from e
        if dims is None:
            dims = (int(doc["dims"][0]), int(doc["dims"][1]))
        pix = _rle_decode(doc["rle"], dims[1])
        objects.append(
            DetectedObject(pix, float(doc["confidence"]), tuple(doc["bbox"]), int(doc["area"]))
        )
    return objects, dims
