"""Packed patch archives.

Binary layout: magic "PVPATCH1", u64 sample count, then per sample a
shape-tagged record (u64 rank + u64 dims, raw uint8 values) for the pixels,
one class byte, a shape-tagged record for the mask, and i64 row, i64 col,
f64 rotation degrees. Integers and floats are little-endian.
"""

import struct
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from .sampling import PatchSet

MAGIC = b"PVPATCH1"


def write_patches(path, patches: PatchSet) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(patches)))
        for i in range(len(patches)):
            _write_tagged(f, patches.pixels[i])
            f.write(struct.pack("<B", int(patches.classes[i])))
            _write_tagged(f, patches.masks[i])
            f.write(
                struct.pack(
                    "<qqd",
                    int(patches.centers[i, 0]),
                    int(patches.centers[i, 1]),
                    float(patches.rotations[i]),
                )
            )


def _write_tagged(f, arr: np.ndarray) -> None:
    f.write(struct.pack("<Q", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    f.write(np.ascontiguousarray(arr, dtype=np.uint8).tobytes())


def read_patches(path) -> PatchSet:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise ValidationError(f"{path}: not a PVPATCH1 archive")
    pos = len(MAGIC)
    (count,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    pixels, classes, masks, centers, rotations = [], [], [], [], []
    for _ in range(count):
        arr, pos = _read_tagged(data, pos, path)
        pixels.append(arr)
        classes.append(data[pos])
        pos += 1
        arr, pos = _read_tagged(data, pos, path)
        masks.append(arr)
        r, c, rot = struct.unpack_from("<qqd", data, pos)
        pos += 24
        centers.append((r, c))
        rotations.append(rot)
    if pos != len(data):
        raise ValidationError(f"{path}: {len(data) - pos} trailing bytes")
    if count == 0:
        from .sampling import _empty_set

        return _empty_set()
    return PatchSet(
        np.stack(pixels),
        np.asarray(classes, np.uint8),
        np.stack(masks),
        np.asarray(centers, np.int32),
        np.asarray(rotations, np.float64),
    )


def _read_tagged(data: bytes, pos: int, path) -> tuple[np.ndarray, int]:
    (rank,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    dims = struct.unpack_from(f"<{rank}Q", data, pos)
    pos += 8 * rank
    n = int(np.prod(dims))
    end = pos + n
    if end > len(data):
        raise ValidationError(f"{path}: truncated patch record")
    arr = np.frombuffer(data[pos:end], dtype=np.uint8).reshape(dims).copy()
    return arr, end
