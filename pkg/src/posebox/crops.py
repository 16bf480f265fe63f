"""Square inpainting crops around projected boxes.

The crop rule: take the 2D box of the projected corners, grow the
longer side by a factor (default 1.5) and cut a square of that edge
centred on the rect.  Parts outside the image are zero-padded, then
the square is resampled to a fixed output edge with bilinear filtering
aligned on half-pixel centres.  The spec of each crop serializes to
JSON so crops can be pasted back losslessly.

Rounding conventions (pinned for reproducibility): the square edge in
pixels rounds to nearest with ties away from zero; the top-left corner
rounds to nearest with ties toward +inf, which keeps the realized
centre within half a pixel of the rect centre.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry
from .errors import (
    DegenerateRectError,
    FullyBehindCameraError,
    NonPositiveFactorError,
    OutOfRangeError,
    ParseError,
    SchemaViolationError,
    SizeMismatchError,
)
from .geometry import Box3D, Camera

DEFAULT_CROP_FACTOR = 1.5
DEFAULT_OUT_EDGE = 512


@dataclass(frozen=True)
class CropSpec:
    """One square crop: source rect, implied padding, output size.

    (left, top) may be negative and left + edge may exceed the source
    width; the pad fields record exactly how much of the square hangs
    outside the source image on each side.
    """

    left: int
    top: int
    edge: int
    src_width: int
    src_height: int
    out_edge: int

    def __post_init__(self) -> None:
        if self.edge < 1:
            raise DegenerateRectError(f"crop edge must be >= 1 px, got {self.edge}")
        if self.out_edge < 1:
            raise OutOfRangeError(f"output edge must be >= 1 px, got {self.out_edge}")
        if self.src_width < 1 or self.src_height < 1:
            raise OutOfRangeError(
                f"source size must be >= 1x1, got {self.src_width}x{self.src_height}"
            )

    @property
    def pad_left(self) -> int:
        return max(0, -self.left)

    @property
    def pad_top(self) -> int:
        return max(0, -self.top)

    @property
    def pad_right(self) -> int:
        return max(0, self.left + self.edge - self.src_width)

    @property
    def pad_bottom(self) -> int:
        return max(0, self.top + self.edge - self.src_height)

    def to_json(self) -> dict:
        return {
            "left": self.left,
            "top": self.top,
            "edge": self.edge,
            "src_width": self.src_width,
            "src_height": self.src_height,
            "out_edge": self.out_edge,
            "pads": {
                "left": self.pad_left,
                "top": self.pad_top,
                "right": self.pad_right,
                "bottom": self.pad_bottom,
            },
        }

    @staticmethod
    def from_json(obj: dict) -> "CropSpec":
        try:
            spec = CropSpec(
                left=int(obj["left"]),
                top=int(obj["top"]),
                edge=int(obj["edge"]),
                src_width=int(obj["src_width"]),
                src_height=int(obj["src_height"]),
                out_edge=int(obj["out_edge"]),
            )
        except KeyError as exc:
            raise SchemaViolationError(f"crop spec is missing field {exc}") from exc
        pads = obj.get("pads")
        if pads is not None:
            stored = (pads.get("left"), pads.get("top"), pads.get("right"), pads.get("bottom"))
            actual = (spec.pad_left, spec.pad_top, spec.pad_right, spec.pad_bottom)
            if tuple(int(p) for p in stored) != actual:
                raise SchemaViolationError(
                    f"crop spec pads {stored} disagree with rect overhang {actual}"
                )
        return spec


def bbox2d_of(
    camera: Camera, box: Box3D, z_near: float = geometry.DEFAULT_Z_NEAR
) -> np.ndarray:
    """Axis-aligned 2D bounds (x0, y0, x1, y1) of the projected corners.

    The corner cloud is near-clipped edge-wise exactly as for hull
    masks, and the result is deliberately NOT clamped to the image, so
    off-screen extent is preserved.  Raises FullyBehindCameraError when
    nothing is in front of the near plane.
    """
    pts = geometry.visible_corner_points(camera, box, z_near)
    if len(pts) == 0:
        raise FullyBehindCameraError("box lies entirely behind the near plane")
    uv = geometry.project_points(camera, pts)
    return np.array([uv[:, 0].min(), uv[:, 1].min(), uv[:, 0].max(), uv[:, 1].max()])


def square_crop_spec(
    rect: np.ndarray,
    image_size: tuple[int, int],
    factor: float = DEFAULT_CROP_FACTOR,
    out_edge: int = DEFAULT_OUT_EDGE,
) -> CropSpec:
    """Square crop spec for a 2D rect: edge = factor * max(height, width).

    `rect` is (x0, y0, x1, y1) in source pixels, `image_size` is the
    source (width, height).  The square is centred on the rect centre
    (within half a pixel after integer rounding) and may overhang the
    image; the overhang becomes zero padding at apply time.
    """
    if factor <= 0.0:
        raise NonPositiveFactorError(f"crop factor must be positive, got {factor}")
    x0, y0, x1, y1 = (float(v) for v in np.asarray(rect).reshape(4))
    w_b = x1 - x0
    h_b = y1 - y0
    if w_b < 0.0 or h_b < 0.0 or max(w_b, h_b) <= 0.0:
        raise DegenerateRectError(f"rect {(x0, y0, x1, y1)} has no extent")
    edge = factor * max(h_b, w_b)
    edge_px = int(np.floor(edge + 0.5))  # ties away from zero (edge > 0)
    edge_px = max(1, edge_px)
    cx = (x0 + x1) / 2.0
    cy = (y0 + y1) / 2.0
    left = int(np.floor(cx - edge_px / 2.0 + 0.5))
    top = int(np.floor(cy - edge_px / 2.0 + 0.5))
    return CropSpec(
        left=left,
        top=top,
        edge=edge_px,
        src_width=int(image_size[0]),
        src_height=int(image_size[1]),
        out_edge=int(out_edge),
    )


def _resize_axis(arr: np.ndarray, axis: int, out_n: int) -> np.ndarray:
    n = arr.shape[axis]
    scale = n / out_n
    centres = (np.arange(out_n, dtype=np.float64) + 0.5) * scale - 0.5
    i0 = np.floor(centres)
    frac = centres - i0
    i0 = i0.astype(np.int64)
    lo = np.clip(i0, 0, n - 1)
    hi = np.clip(i0 + 1, 0, n - 1)
    shape = [1] * arr.ndim
    shape[axis] = out_n
    frac = frac.reshape(shape)
    return np.take(arr, lo, axis=axis) * (1.0 - frac) + np.take(arr, hi, axis=axis) * frac


def resize_bilinear(image: np.ndarray, out_size: tuple[int, int]) -> np.ndarray:
    """Bilinear resample with half-pixel centre alignment.

    Output pixel (i, j) samples the input at ((j + 0.5) * sx - 0.5,
    (i + 0.5) * sy - 0.5) with edge clamping.  Equal sizes reproduce
    the input bit-exactly.  Integer images round half up on the way
    back to their dtype; float images stay float.
    """
    arr = np.asarray(image)
    out = _resize_axis(arr.astype(np.float64), 0, out_size[1])
    out = _resize_axis(out, 1, out_size[0])
    if np.issubdtype(arr.dtype, np.integer):
        info = np.iinfo(arr.dtype)
        return np.clip(np.floor(out + 0.5), info.min, info.max).astype(arr.dtype)
    return out.astype(arr.dtype)


def apply_crop(image: np.ndarray, spec: CropSpec) -> np.ndarray:
    """Cut the spec's square out of the image (zero-padded) and resize it.

    `image` is (H, W) or (H, W, C) and must match the spec's source
    frame; the result is (out_edge, out_edge[, C]) in the same dtype.
    """
    arr = np.asarray(image)
    if arr.ndim not in (2, 3):
        raise SizeMismatchError(f"image must be 2D or 3D, got shape {arr.shape}")
    h, w = arr.shape[:2]
    if (w, h) != (spec.src_width, spec.src_height):
        raise SizeMismatchError(
            f"image is {w}x{h}, crop spec expects {spec.src_width}x{spec.src_height}"
        )
    square_shape = (spec.edge, spec.edge) + arr.shape[2:]
    square = np.zeros(square_shape, dtype=arr.dtype)
    x0 = max(0, spec.left)
    y0 = max(0, spec.top)
    x1 = min(w, spec.left + spec.edge)
    y1 = min(h, spec.top + spec.edge)
    if x0 < x1 and y0 < y1:
        square[y0 - spec.top : y1 - spec.top, x0 - spec.left : x1 - spec.left] = arr[y0:y1, x0:x1]
    return resize_bilinear(square, (spec.out_edge, spec.out_edge))


def save_crop_spec(spec: CropSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_json(), indent=2) + "\n")


def load_crop_spec(path: str | Path) -> CropSpec:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return CropSpec.from_json(obj)
