"""Self-describing binary weight files.

Layout (all integers 64-bit little-endian):

    magic "SEGMAP01"
    per parameter, in order:
        name length, name (utf-8)
        rank, then each dimension
        raw float32 little-endian values, row-major
"""

import struct
from pathlib import Path

import numpy as np

from ..errors import ValidationError

MAGIC = b"SEGMAP01"


def write_weights(path, named_arrays: list[tuple[str, np.ndarray]]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        for name, arr in named_arrays:
            encoded = name.encode("utf-8")
            f.write(struct.pack("<Q", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<Q", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_weights(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise ValidationError(f"{path}: not a SEGMAP01 weight file")
    pos = len(MAGIC)
    out: dict[str, np.ndarray] = {}
    while pos < len(data):
        if pos + 8 > len(data):
            raise ValidationError(f"{path}: truncated record header")
        (name_len,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        name = data[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        dims = struct.unpack_from(f"<{rank}Q", data, pos)
        pos += 8 * rank
        count = int(np.prod(dims)) if rank else 1
        end = pos + 4 * count
        if end > len(data):
            raise ValidationError(f"{path}: truncated data for {name!r}")
        arr = np.frombuffer(data[pos:end], dtype="<f4").reshape(dims)
        pos = end
        out[name] = arr.copy()
    return out
