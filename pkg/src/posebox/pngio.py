"""PNG and raw-tensor helpers shared by the map, mask and crop modules.

Quantization rules are fixed so that rendered bytes are reproducible:
float color in [0, 1] maps to 8-bit by round-half-up; depth in metres
maps to 16-bit millimetres (round-half-up, saturating at 65535, with 0
reserved for background).  All multi-byte integers in the raw tensor
formats are little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ParseError


def quantize_unit(values: np.ndarray) -> np.ndarray:
    """Map float values in [0, 1] to uint8 with round-half-up."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def save_rgb8(path: str | Path, data: np.ndarray) -> None:
    """Write an (H, W, 3) float image in [0, 1] as an 8-bit RGB PNG."""
    Image.fromarray(quantize_unit(data), mode="RGB").save(path, format="PNG")


def load_rgb8(path: str | Path) -> np.ndarray:
    """Read an image file as (H, W, 3) uint8."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def save_depth16(path: str | Path, depth_m: np.ndarray) -> None:
    """Write an (H, W) depth image in metres as 16-bit grayscale millimetres.

    Zero marks background; depths beyond 65.535 m saturate.
    """
    d = np.asarray(depth_m, dtype=np.float64)
    mm = np.floor(d * 1000.0 + 0.5)
    mm = np.clip(mm, 0.0, 65535.0).astype(np.uint16)
    Image.fromarray(mm).save(path, format="PNG")  # uint16 -> 16-bit grayscale


def load_depth16(path: str | Path) -> np.ndarray:
    """Read a 16-bit depth PNG back to metres (background stays 0)."""
    with Image.open(path) as img:
        arr = np.asarray(img)
    return arr.astype(np.float64) / 1000.0


def save_gray8(path: str | Path, data: np.ndarray) -> None:
    """Write an (H, W) uint8 image as an 8-bit grayscale PNG."""
    Image.fromarray(np.asarray(data, dtype=np.uint8), mode="L").save(path, format="PNG")


def load_gray8(path: str | Path) -> np.ndarray:
    """Read an image file as (H, W) uint8 grayscale."""
    with Image.open(path) as img:
        return np.asarray(img.convert("L"))


def write_tensor(path: str | Path, magic: bytes, dims: tuple[int, ...], data: np.ndarray) -> None:
    """Write a little-endian float32 tensor with a 4-byte magic and version 1."""
    payload = np.ascontiguousarray(data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", 1))
        for d in dims:
            fh.write(struct.pack("<I", d))
        fh.write(payload.tobytes())


def read_tensor(path: str | Path, magic: bytes, n_dims: int) -> tuple[tuple[int, ...], np.ndarray]:
    """Read a tensor written by write_tensor; returns (dims, flat float32 data)."""
    raw = Path(path).read_bytes()
    header = 4 + 4 + 4 * n_dims
    if len(raw) < header:
        raise ParseError(f"{path}: truncated header")
    if raw[:4] != magic:
        raise ParseError(f"{path}: bad magic {raw[:4]!r}, expected {magic!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != 1:
        raise ParseError(f"{path}: unsupported version {version}")
    dims = struct.unpack_from(f"<{n_dims}I", raw, 8)
    count = int(np.prod(dims)) if dims else 0
    body = raw[header:]
    if len(body) != 4 * count:
        raise ParseError(f"{path}: payload holds {len(body)} bytes, expected {4 * count}")
    return dims, np.frombuffer(body, dtype="<f4").copy()
