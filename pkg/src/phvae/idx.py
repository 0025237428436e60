"""Reader/writer for the big-endian IDX container used by MNIST.

Only unsigned-byte payloads (type code 0x08) are supported. Image files carry
magic 0x00000803 (2051) with dims ``[n, rows, cols]``; label files carry
0x00000801 (2049) with dims ``[n]``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from phvae.errors import DownscaleError, IdxFormatError, IdxTruncatedError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
_UBYTE = 0x08


def parse_idx(buf: bytes) -> np.ndarray:
    """Decode an IDX byte string into a uint8 array of the declared shape."""
    if len(buf) < 4:
        raise IdxTruncatedError(f"IDX header needs 4 bytes, got {len(buf)}")
    zero, dtype, ndim = struct.unpack(">HBB", buf[:4])
    if zero != 0 or dtype != _UBYTE or ndim == 0:
        raise IdxFormatError(f"bad IDX magic 0x{int.from_bytes(buf[:4], 'big'):08x}")
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise IdxTruncatedError(f"IDX header declares {ndim} dims but file has {len(buf)} bytes")
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    n = int(np.prod(dims))
    if len(buf) - header < n:
        raise IdxTruncatedError(f"IDX payload has {len(buf) - header} bytes, expected {n} for dims {dims}")
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=header).reshape(dims).copy()


def encode_idx(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise IdxFormatError(f"only uint8 payloads can be written, got {arr.dtype}")
    head = struct.pack(">HBB", 0, _UBYTE, arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def read_idx(path) -> np.ndarray:
    return parse_idx(Path(path).read_bytes())


def write_idx(path, arr: np.ndarray) -> None:
    Path(path).write_bytes(encode_idx(arr))


def read_labels(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:4] != LABELS_MAGIC.to_bytes(4, "big"):
        raise IdxFormatError(f"{path}: expected label magic 0x{LABELS_MAGIC:08x}")
    return parse_idx(buf)


def images_from_bytes(buf: bytes) -> np.ndarray:
    """Raw uint8 image tensor ``(n, rows, cols)``; rejects anything but image magic."""
    magic = int.from_bytes(buf[:4], "big") if len(buf) >= 4 else None
    if magic is not None and magic != IMAGES_MAGIC:
        raise IdxFormatError(f"expected image magic 0x{IMAGES_MAGIC:08x}, got 0x{magic:08x}")
    return parse_idx(buf)


def downscale(images: np.ndarray, size: int) -> np.ndarray:
    """Average non-overlapping blocks so each ``(rows, cols)`` image becomes ``(size, size)``."""
    n, rows, cols = images.shape
    if size < 1 or rows % size or cols % size:
        raise DownscaleError(f"target size {size} does not divide image size {rows}x{cols}")
    br, bc = rows // size, cols // size
    return images.reshape(n, size, br, size, bc).mean(axis=(2, 4))


def load_idx(path, size: int | None = None) -> np.ndarray:
    """Load an image file as ``(n, pixels)`` floats on [0, 1], optionally block-averaged to size x size."""
    images = images_from_bytes(Path(path).read_bytes()).astype(np.float64) / 255.0
    if size is not None and size != images.shape[1]:
        images = downscale(images, size)
    return images.reshape(images.shape[0], -1)


def to_bytes_pixels(x: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of the 1/255 scaling: flattened [0, 1] pixels back to a uint8 image tensor."""
    x = np.asarray(x, dtype=np.float64)
    return np.clip(np.rint(x * 255.0), 0, 255).astype(np.uint8).reshape(-1, rows, cols)
