"""Raster, annotation, and split-file I/O plus dataset manifests.

Rasters are 8-bit RGB PNGs. Annotations are one JSON document per raster:
{"raster": id, "polygons": [[[x, y], ...], ...]}. A split file is a JSON
object mapping split names to raster identifier lists.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import ValidationError
from .geometry import validate_polygons


def save_raster(path, raster: np.ndarray) -> None:
    if raster.ndim != 3 or raster.shape[2] != 3 or raster.dtype != np.uint8:
        raise ValidationError(f"raster must be uint8 (H, W, 3), got {raster.shape} {raster.dtype}")
    Image.fromarray(raster, mode="RGB").save(path, format="PNG")


def load_raster(path) -> np.ndarray:
    try:
        img = Image.open(path)
    except (OSError, Image.UnidentifiedImageError) as e:
        raise ValidationError(f"{path}: cannot read raster ({e})") from e
    arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return arr


def raster_dims(path) -> tuple[int, int]:
    """(H, W) from the PNG header without decoding pixel data."""
    try:
        with Image.open(path) as img:
            w, h = img.size
    except (OSError, Image.UnidentifiedImageError) as e:
        raise ValidationError(f"{path}: cannot read raster ({e})") from e
    return h, w


def save_mask(path, mask: np.ndarray) -> None:
    Image.fromarray((mask > 0).astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("L"))
    return (arr > 127).astype(np.uint8)


def save_annotations(path, raster_id: str, polygons) -> None:
    doc = {
        "raster": raster_id,
        "polygons": [np.asarray(p, dtype=float).tolist() for p in polygons],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_annotations(path, dims: tuple[int, int] | None = None):
    """Returns (raster_id, list of (V, 2) float vertex arrays)."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"{path}: cannot read annotations ({e})") from e
    if not isinstance(doc, dict) or "raster" not in doc or "polygons" not in doc:
        raise ValidationError(f"{path}: missing 'raster' or 'polygons' keys")
    polys = [np.asarray(p, dtype=float) for p in doc["polygons"]]
    if dims is not None:
        validate_polygons(polys, dims)
    return doc["raster"], polys


def load_split_file(path) -> dict[str, list[str]]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"{path}: cannot read split file ({e})") from e
    if not isinstance(doc, dict) or not all(
        isinstance(v, list) for v in doc.values()
    ):
        raise ValidationError(f"{path}: expected {{split: [raster ids]}}")
    return {k: [str(x) for x in v] for k, v in doc.items()}


@dataclass
class Manifest:
    split: str
    images: int
    area_km2: float
    annotations: int


def compute_manifest(
    split: str,
    dims: list[tuple[int, int]],
    annotation_counts: list[int],
    resolution_m: float = 0.3,
) -> Manifest:
    """Counts and area derived from the data, never hand-entered."""
    area = sum(h * w for h, w in dims) * resolution_m**2 / 1e6
    return Manifest(split, len(dims), area, int(sum(annotation_counts)))
