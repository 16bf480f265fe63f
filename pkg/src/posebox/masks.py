"""Inpainting masks built from box silhouettes.

A box's editing mask is the filled convex hull of its projected
corners, which covers the object and the ground shadow of its full
extent.  Occluding objects are found with the renderer (never with
heuristics on 2D rects): anything whose rendered surface sits in front
of the target inside that hull is an occluder, and its own mask is
subtracted so foreground objects survive the edit.

Mask PNG convention: 0 = keep, 255 = edit region; on load any value
>= 128 reads as True.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry, pngio, raster
from .errors import (
    DegenerateProjectionError,
    NonPositiveFactorError,
    SizeMismatchError,
    UnknownTargetIdError,
)
from .geometry import Box3D, Camera


@dataclass
class BinaryMask:
    """A boolean image plane; True marks the region to edit."""

    data: np.ndarray  # (height, width) bool

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def save_png(self, path: str | Path) -> None:
        pngio.save_gray8(path, np.where(self.data, 255, 0).astype(np.uint8))

    @staticmethod
    def load_png(path: str | Path) -> "BinaryMask":
        return BinaryMask(pngio.load_gray8(path) >= 128)


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Convex hull of 2D points by Andrew's monotone chain.

    Returns the hull vertices in counter-clockwise order (in u-right /
    v-down pixel coordinates) with collinear points dropped.  Fewer
    than 3 distinct non-collinear input points yield a hull with fewer
    than 3 vertices.
    """
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts
    # np.unique sorts lexicographically, which is exactly the sweep order.
    def half(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2:
                a, b = out[-2], out[-1]
                if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) <= 0.0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        return hull
    # Canonicalize to CCW in pixel coordinates (positive shoelace area).
    area = 0.0
    for i in range(len(hull)):
        a, b = hull[i], hull[(i + 1) % len(hull)]
        area += a[0] * b[1] - b[0] * a[1]
    if area < 0.0:
        hull = hull[::-1]
    return hull


def _fill_convex(hull: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Boolean plane of pixel centres inside a CCW convex polygon (boundary inclusive)."""
    width, height = size
    out = np.zeros((height, width), dtype=bool)
    u_lo = max(0, int(np.floor(hull[:, 0].min())))
    u_hi = min(width - 1, int(np.ceil(hull[:, 0].max())))
    v_lo = max(0, int(np.floor(hull[:, 1].min())))
    v_hi = min(height - 1, int(np.ceil(hull[:, 1].max())))
    if u_lo > u_hi or v_lo > v_hi:
        return out
    uu, vv = np.meshgrid(
        np.arange(u_lo, u_hi + 1, dtype=np.float64),
        np.arange(v_lo, v_hi + 1, dtype=np.float64),
    )
    inside = np.ones(uu.shape, dtype=bool)
    for i in range(len(hull)):
        a = hull[i]
        b = hull[(i + 1) % len(hull)]
        inside &= (b[0] - a[0]) * (vv - a[1]) - (b[1] - a[1]) * (uu - a[0]) >= 0.0
    out[v_lo : v_hi + 1, u_lo : u_hi + 1] = inside
    return out


def hull_mask(
    camera: Camera,
    box: Box3D,
    size: tuple[int, int],
    z_near: float = geometry.DEFAULT_Z_NEAR,
) -> BinaryMask:
    """Filled convex hull of the projected (near-clipped) box corners.

    Box edges crossing the near plane are clipped before projection, so
    partially-behind boxes still yield a finite hull.  Raises
    DegenerateProjectionError when the visible corner cloud spans no
    area (fewer than 3 points, or collinear).
    """
    pts = geometry.visible_corner_points(camera, box, z_near)
    if len(pts) < 3:
        raise DegenerateProjectionError(
            f"only {len(pts)} corner points in front of the near plane"
        )
    hull = convex_hull(geometry.project_points(camera, pts))
    if len(hull) < 3:
        raise DegenerateProjectionError("projected corners are collinear")
    return BinaryMask(_fill_convex(hull, size))


def find_occluders(
    camera: Camera,
    target_id: int,
    boxes: list[tuple[int, Box3D]],
    size: tuple[int, int],
    z_near: float = geometry.DEFAULT_Z_NEAR,
    min_pixels: int = 1,
) -> set[int]:
    """Ids of boxes that occlude the target inside its hull mask.

    The whole scene is rendered to an id + depth buffer; a box is an
    occluder when at least `min_pixels` hull pixels show its surface
    strictly in front of the target's.  Where the target has no
    rendered surface of its own, the reference depth is the depth of
    its nearest corner (clamped to the near plane), which errs toward
    flagging anything in front of the whole box.
    """
    by_id = dict(boxes)
    if target_id not in by_id:
        raise UnknownTargetIdError(f"target id {target_id} not among {sorted(by_id)}")
    target_box = by_id[target_id]
    hull = hull_mask(camera, target_box, size, z_near)
    scene = raster.render_id_buffer(camera, boxes, size, z_near)
    alone = raster.render_id_buffer(camera, [(target_id, target_box)], size, z_near)

    corners = geometry.world_to_camera(camera, geometry.box_corners(target_box))
    nearest = max(float(corners[:, 2].min()), z_near)
    ref = np.where(np.isfinite(alone.depth), alone.depth, np.float32(nearest))

    cand = hull.data & (scene.ids != 0) & (scene.ids != target_id) & (scene.depth < ref)
    ids, counts = np.unique(scene.ids[cand], return_counts=True)
    return {int(i) for i, c in zip(ids, counts) if c >= min_pixels}


def occlusion_aware_mask(target_mask: BinaryMask, occluder_masks: list[BinaryMask]) -> BinaryMask:
    """Subtract every occluder's mask from the target's hull mask."""
    out = target_mask.data.copy()
    for m in occluder_masks:
        if m.data.shape != out.shape:
            raise SizeMismatchError(
                f"occluder mask is {m.data.shape}, target is {out.shape}"
            )
        out &= ~m.data
    return BinaryMask(out)


def enlarge_box(box: Box3D, factors: float | tuple[float, float, float]) -> Box3D:
    """Scale a box about its centre, keeping position and yaw.

    `factors` is a scalar or a per-dimension (w, l, h) triple; every
    factor must be positive.
    """
    if np.isscalar(factors):
        f = (float(factors),) * 3
    else:
        f = tuple(float(v) for v in factors)  # type: ignore[arg-type]
        if len(f) != 3:
            raise NonPositiveFactorError(f"need 1 or 3 factors, got {factors!r}")
    if min(f) <= 0.0:
        raise NonPositiveFactorError(f"scale factors must be positive, got {f}")
    return Box3D(box.center, tuple(s * v for s, v in zip(box.size, f)), box.yaw)
