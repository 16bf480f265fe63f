"""Deterministic z-buffered software rasterizer.

Everything here is plain numpy so that the same inputs give the same
bytes on every platform and at every thread count.  Sampling follows
one fill rule throughout:

* A pixel belongs to a triangle iff its centre (at integer pixel
  coordinates, see geometry) lies inside it, with ties on edges broken
  by the top-left rule: a centre exactly on an edge counts only when
  that edge is a top edge (horizontal, pointing +u in canonical
  winding) or a left edge (pointing -v).  Two triangles sharing an
  edge therefore never double-write nor leave a gap along the seam.
* Depth is interpolated perspective-correctly (1/z is linear in screen
  space) and compared strictly: a write happens only when the new
  depth is strictly smaller than the stored one.
* Polylines ignore depth entirely; they are overlay strokes.  A pixel
  is covered when its centre is within width/2 of the segment
  (inclusive).
"""

from __future__ import annotations

import numpy as np

from . import geometry
from .errors import (
    DimensionMismatchError,
    DuplicateIdError,
    OutOfRangeError,
)
from .geometry import Box3D, Camera


class RasterTarget:
    """Mutable render target: color planes, a depth plane, optional ids.

    channels: (height, width, n_channels) float32, zero-initialised.
    depth:    (height, width) float32, +inf where nothing was drawn.
    ids:      (height, width) uint32 or None; 0 means background.
    """

    def __init__(self, width: int, height: int, n_channels: int, with_ids: bool = False):
        if width < 1 or height < 1:
            raise OutOfRangeError(f"target size must be at least 1x1, got {width}x{height}")
        if n_channels < 0:
            raise OutOfRangeError(f"channel count must be >= 0, got {n_channels}")
        self.width = int(width)
        self.height = int(height)
        self.channels = np.zeros((height, width, n_channels), dtype=np.float32)
        self.depth = np.full((height, width), np.inf, dtype=np.float32)
        self.ids = np.zeros((height, width), dtype=np.uint32) if with_ids else None

    def silhouette(self) -> np.ndarray:
        """Boolean (height, width) plane marking drawn (finite-depth) pixels."""
        return np.isfinite(self.depth)


def _edge(ax, ay, bx, by, px, py):
    # Signed area parallelogram test; > 0 keeps p on the interior side
    # of a->b in canonical winding.
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _top_left(ax, ay, bx, by) -> bool:
    du, dv = bx - ax, by - ay
    return dv < 0.0 or (dv == 0.0 and du > 0.0)


def fill_triangle(
    target: RasterTarget,
    tri: np.ndarray,
    color: np.ndarray,
    camera: Camera,
    instance_id: int | None = None,
) -> None:
    """Rasterize one camera-frame triangle into the target.

    The triangle must already be near-clipped (all z > 0).  `color` is a
    float vector matching the target channel count; it is written
    wholesale wherever the depth test passes.  Degenerate (zero-area)
    projections draw nothing.
    """
    color = np.asarray(color, dtype=np.float32).reshape(-1)
    if color.shape[0] != target.channels.shape[2]:
        raise DimensionMismatchError(
            f"color has {color.shape[0]} entries, target has {target.channels.shape[2]} channels"
        )
    tri = np.asarray(tri, dtype=np.float64).reshape(3, 3)
    uv = geometry.project_points(camera, tri)
    z = tri[:, 2].copy()

    area = _edge(uv[0, 0], uv[0, 1], uv[1, 0], uv[1, 1], uv[2, 0], uv[2, 1])
    if area == 0.0:
        return
    if area < 0.0:
        uv[[1, 2]] = uv[[2, 1]]
        z[[1, 2]] = z[[2, 1]]
        area = -area

    u_lo = max(0, int(np.floor(uv[:, 0].min())))
    u_hi = min(target.width - 1, int(np.ceil(uv[:, 0].max())))
    v_lo = max(0, int(np.floor(uv[:, 1].min())))
    v_hi = min(target.height - 1, int(np.ceil(uv[:, 1].max())))
    if u_lo > u_hi or v_lo > v_hi:
        return

    uu, vv = np.meshgrid(
        np.arange(u_lo, u_hi + 1, dtype=np.float64),
        np.arange(v_lo, v_hi + 1, dtype=np.float64),
    )
    # w0 spans edge 1->2 (opposite vertex 0), w1 edge 2->0, w2 edge 0->1.
    w0 = _edge(uv[1, 0], uv[1, 1], uv[2, 0], uv[2, 1], uu, vv)
    w1 = _edge(uv[2, 0], uv[2, 1], uv[0, 0], uv[0, 1], uu, vv)
    w2 = _edge(uv[0, 0], uv[0, 1], uv[1, 0], uv[1, 1], uu, vv)
    inside = (
        ((w0 > 0.0) | ((w0 == 0.0) & _top_left(uv[1, 0], uv[1, 1], uv[2, 0], uv[2, 1])))
        & ((w1 > 0.0) | ((w1 == 0.0) & _top_left(uv[2, 0], uv[2, 1], uv[0, 0], uv[0, 1])))
        & ((w2 > 0.0) | ((w2 == 0.0) & _top_left(uv[0, 0], uv[0, 1], uv[1, 0], uv[1, 1])))
    )
    if not inside.any():
        return

    inv_z = (w0 / z[0] + w1 / z[1] + w2 / z[2]) / area
    with np.errstate(divide="ignore", over="ignore"):
        depth = (1.0 / inv_z).astype(np.float32)

    window = np.s_[v_lo : v_hi + 1, u_lo : u_hi + 1]
    win_depth = target.depth[window]
    write = inside & (depth < win_depth)
    if not write.any():
        return
    win_depth[write] = depth[write]
    target.channels[window][write] = color
    if instance_id is not None and target.ids is not None:
        target.ids[window][write] = np.uint32(instance_id)


def draw_polyline(
    target: RasterTarget,
    points: np.ndarray,
    color: np.ndarray,
    width: float,
) -> None:
    """Stamp a wide polyline over the target, ignoring the depth buffer.

    Pixels whose centre lies within width/2 of any segment are painted;
    the depth plane is left untouched so overlays never affect later
    depth tests.  Fewer than two points draws nothing.
    """
    color = np.asarray(color, dtype=np.float32).reshape(-1)
    if color.shape[0] != target.channels.shape[2]:
        raise DimensionMismatchError(
            f"color has {color.shape[0]} entries, target has {target.channels.shape[2]} channels"
        )
    if width <= 0.0:
        raise OutOfRangeError(f"stroke width must be positive, got {width}")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        return
    r = width / 2.0
    for k in range(len(pts) - 1):
        a, b = pts[k], pts[k + 1]
        u_lo = max(0, int(np.floor(min(a[0], b[0]) - r)))
        u_hi = min(target.width - 1, int(np.ceil(max(a[0], b[0]) + r)))
        v_lo = max(0, int(np.floor(min(a[1], b[1]) - r)))
        v_hi = min(target.height - 1, int(np.ceil(max(a[1], b[1]) + r)))
        if u_lo > u_hi or v_lo > v_hi:
            continue
        uu, vv = np.meshgrid(
            np.arange(u_lo, u_hi + 1, dtype=np.float64),
            np.arange(v_lo, v_hi + 1, dtype=np.float64),
        )
        d = b - a
        len2 = float(d @ d)
        if len2 == 0.0:
            dist2 = (uu - a[0]) ** 2 + (vv - a[1]) ** 2
        else:
            t = np.clip(((uu - a[0]) * d[0] + (vv - a[1]) * d[1]) / len2, 0.0, 1.0)
            dist2 = (uu - (a[0] + t * d[0])) ** 2 + (vv - (a[1] + t * d[1])) ** 2
        hit = dist2 <= r * r
        if hit.any():
            target.channels[v_lo : v_hi + 1, u_lo : u_hi + 1][hit] = color


def draw_disc(
    target: RasterTarget,
    center: np.ndarray,
    radius_m: float,
    color: np.ndarray,
    camera: Camera,
) -> None:
    """Draw a depth-tested billboard disc for a camera-frame point.

    The disc sits at the point's depth with pixel radius fx * radius_m
    / z.  When that radius is too small to reach any pixel centre, the
    single nearest pixel is written instead so tiny markers never
    vanish entirely.
    """
    color = np.asarray(color, dtype=np.float32).reshape(-1)
    if color.shape[0] != target.channels.shape[2]:
        raise DimensionMismatchError(
            f"color has {color.shape[0]} entries, target has {target.channels.shape[2]} channels"
        )
    if radius_m <= 0.0:
        raise OutOfRangeError(f"disc radius must be positive, got {radius_m}")
    center = np.asarray(center, dtype=np.float64).reshape(3)
    uv = geometry.project(camera, center)
    z = np.float32(center[2])
    r = camera.fx * radius_m / center[2]

    u_lo = max(0, int(np.floor(uv[0] - r)))
    u_hi = min(target.width - 1, int(np.ceil(uv[0] + r)))
    v_lo = max(0, int(np.floor(uv[1] - r)))
    v_hi = min(target.height - 1, int(np.ceil(uv[1] + r)))
    wrote_area = False
    if u_lo <= u_hi and v_lo <= v_hi:
        uu, vv = np.meshgrid(
            np.arange(u_lo, u_hi + 1, dtype=np.float64),
            np.arange(v_lo, v_hi + 1, dtype=np.float64),
        )
        hit = (uu - uv[0]) ** 2 + (vv - uv[1]) ** 2 <= r * r
        window = np.s_[v_lo : v_hi + 1, u_lo : u_hi + 1]
        win_depth = target.depth[window]
        write = hit & (z < win_depth)
        if write.any():
            win_depth[write] = z
            target.channels[window][write] = color
        wrote_area = bool(hit.any())
    if not wrote_area:
        # Minimum footprint: fall back to the nearest pixel, ties rounding
        # toward +inf, still subject to the depth test.
        u = int(np.floor(uv[0] + 0.5))
        v = int(np.floor(uv[1] + 0.5))
        if 0 <= u < target.width and 0 <= v < target.height and z < target.depth[v, u]:
            target.depth[v, u] = z
            target.channels[v, u] = color


def render_id_buffer(
    camera: Camera,
    boxes: list[tuple[int, Box3D]],
    size: tuple[int, int],
    z_near: float = geometry.DEFAULT_Z_NEAR,
) -> RasterTarget:
    """Render box meshes into an id + depth buffer.

    `boxes` pairs a nonzero, unique uint32 id with each box; `size` is
    (width, height).  Faces are near-clipped, fan-triangulated and
    z-buffered; the result has no color planes.  Boxes entirely behind
    the near plane simply leave no pixels.
    """
    width, height = size
    target = RasterTarget(width, height, 0, with_ids=True)
    seen: set[int] = set()
    for bid, _ in boxes:
        if bid <= 0 or bid > 0xFFFFFFFF:
            raise OutOfRangeError(f"instance id must be a nonzero uint32, got {bid}")
        if bid in seen:
            raise DuplicateIdError(f"instance id {bid} appears more than once")
        seen.add(bid)
    for bid, box in boxes:
        corners = geometry.world_to_camera(camera, geometry.box_corners(box))
        for _, (i, j, k) in geometry.face_triangles():
            poly = geometry.clip_polygon_near(corners[[i, j, k]], z_near)
            for t in range(1, len(poly) - 1):
                fill_triangle(
                    target,
                    poly[[0, t, t + 1]],
                    np.zeros(0, dtype=np.float32),
                    camera,
                    instance_id=bid,
                )
    return target
