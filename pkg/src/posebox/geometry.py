"""Cameras, yaw-oriented 3D boxes and pinhole projection.

COORDINATE CONVENTIONS (asserted throughout the toolkit)
--------------------------------------------------------
World frame:   right-handed, z points up.  Box yaw is a rotation about
               world +z, stored normalized to (-pi, pi] with the -pi
               boundary mapped to +pi.
Camera frame:  x points right, y points down, z points forward along
               the optical axis.  A camera pose is the rigid transform
               world -> camera:  p_cam = R @ p_world + t,  with R given
               as a unit quaternion (w, x, y, z).
Pixels:        u grows right, v grows down.  Continuous pixel
               coordinates are defined so that the centre of pixel
               column u, row v sits exactly at (u, v); pinhole
               projection is u = fx * x / z + cx, v = fy * y / z + cy.

Box corners are indexed 0..7 by the sign bits of the local box frame,
where local +x is the length axis (forward), local +y the width axis
and local +z the height axis.  Bit 0 selects the x sign, bit 1 the y
sign, bit 2 the z sign; a zero bit means the positive side.  Corner 0
is therefore (+x, +y, +z) and corner 7 is (-x, -y, -z):

        1 ---------- 0
       /|           /|        corner  bits   signs        corner  bits   signs
      3 ---------- 2 |           0    000    (+x,+y,+z)      4    100    (+x,+y,-z)
      | |          | |           1    001    (-x,+y,+z)      5    101    (-x,+y,-z)
      | 5 ---------|-4           2    010    (+x,-y,+z)      6    110    (+x,-y,-z)
      |/           |/            3    011    (-x,-y,+z)      7    111    (-x,-y,-z)
      7 ---------- 6

(Sketch axes: x right = length/forward, z up = height, y into the page
= width; the top face is 0-1-3-2, the bottom face 4-5-7-6.)

The box size triple is (w, l, h): width along local +y, length along
local +x, height along local +z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    NonFiniteError,
    NonPositiveDepthError,
    OutOfRangeError,
)

# Near-plane distance in metres used by every clipping entry point
# unless the caller overrides it.
DEFAULT_Z_NEAR = 0.1

# Corner sign table, row i = (sx, sy, sz) for corner i (see module docstring).
CORNER_SIGNS = np.array(
    [
        [+1, +1, +1],
        [-1, +1, +1],
        [+1, -1, +1],
        [-1, -1, +1],
        [+1, +1, -1],
        [-1, +1, -1],
        [+1, -1, -1],
        [-1, -1, -1],
    ],
    dtype=np.float64,
)

# The six faces in fixed order.  Each entry is (name, cycle) where the
# 4-corner cycle winds so that the right-hand-rule normal points out of
# the box (verified by the outward-normal invariant in the tests).
FACES: tuple[tuple[str, tuple[int, int, int, int]], ...] = (
    ("front", (0, 2, 6, 4)),   # +x
    ("back", (1, 5, 7, 3)),    # -x
    ("left", (0, 4, 5, 1)),    # +y
    ("right", (2, 3, 7, 6)),   # -y
    ("top", (0, 1, 3, 2)),     # +z
    ("bottom", (4, 6, 7, 5)),  # -z
)

# The twelve edges as corner index pairs: four along x, four along y,
# four along z.  Wireframe colors are assigned in this order.
EDGES: tuple[tuple[int, int], ...] = (
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
)


def normalize_angle(a: float) -> float:
    """Wrap an angle in radians to (-pi, pi], mapping the -pi boundary to +pi.

    Raises NonFiniteError for NaN or infinite input.
    """
    if not math.isfinite(a):
        raise NonFiniteError(f"angle must be finite, got {a!r}")
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} must be finite, got {arr!r}")


@dataclass(frozen=True)
class Box3D:
    """Yaw-oriented box in the world frame.

    center: (3,) world position of the box centre in metres.
    size:   (w, l, h) in metres; see the module docstring for axes.
    yaw:    rotation about world +z, normalized on construction.
    """

    center: np.ndarray
    size: tuple[float, float, float]
    yaw: float

    def __post_init__(self) -> None:
        center = np.asarray(self.center, dtype=np.float64).reshape(3)
        _check_finite("center", center)
        size = tuple(float(s) for s in self.size)
        if len(size) != 3:
            raise OutOfRangeError(f"size must have 3 entries, got {self.size!r}")
        _check_finite("size", np.asarray(size))
        if min(size) <= 0.0:
            raise OutOfRangeError(f"size entries must be positive, got {size}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))

    @property
    def w(self) -> float:
        return self.size[0]

    @property
    def l(self) -> float:  # noqa: E743 - matches the (w, l, h) naming
        return self.size[1]

    @property
    def h(self) -> float:
        return self.size[2]


@dataclass(frozen=True)
class Camera:
    """Pinhole camera with a world -> camera rigid transform.

    Intrinsics are in pixels; rotation is a unit quaternion (w, x, y, z)
    and translation is in metres, so that p_cam = R @ p_world + t.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        if self.fx <= 0.0 or self.fy <= 0.0:
            raise OutOfRangeError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise OutOfRangeError(f"image size must be at least 1x1, got {self.width}x{self.height}")
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        _check_finite("rotation", q)
        _check_finite("translation", t)
        n = float(np.linalg.norm(q))
        if n < 1e-12:
            raise OutOfRangeError("rotation quaternion has zero norm")
        q = q / n
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "_rot", rotmat_from_quat(q))

    @property
    def rot(self) -> np.ndarray:
        """(3, 3) rotation matrix of the world -> camera transform."""
        return self._rot  # type: ignore[attr-defined]


def rotmat_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix for a unit quaternion (w, x, y, z)."""
    w, x, y, z = (float(v) for v in q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def quat_from_rotmat(m: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for a proper rotation matrix.

    The sign convention puts w >= 0.
    """
    m = np.asarray(m, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s])
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def box_corners(box: Box3D) -> np.ndarray:
    """(8, 3) world-frame corner positions in the fixed corner order."""
    w, l, h = box.size
    local = CORNER_SIGNS * np.array([l / 2.0, w / 2.0, h / 2.0])
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return local @ rot.T + box.center


def face_triangles() -> list[tuple[int, tuple[int, int, int]]]:
    """The 12 mesh triangles as (face_index, corner index triple).

    Each face cycle (a, b, c, d) splits along the a-c diagonal into
    (a, b, c) and (a, c, d), giving two triangles per face in a fixed
    order: face 0 triangles first, then face 1, and so on.
    """
    tris = []
    for fi, (_, (a, b, c, d)) in enumerate(FACES):
        tris.append((fi, (a, b, c)))
        tris.append((fi, (a, c, d)))
    return tris


def world_to_camera(camera: Camera, points: np.ndarray) -> np.ndarray:
    """Map world points (..., 3) into the camera frame."""
    points = np.asarray(points, dtype=np.float64)
    return points @ camera.rot.T + camera.translation


def camera_to_world(camera: Camera, points: np.ndarray) -> np.ndarray:
    """Inverse of world_to_camera."""
    points = np.asarray(points, dtype=np.float64)
    return (points - camera.translation) @ camera.rot


def camera_center_world(camera: Camera) -> np.ndarray:
    """World position of the camera's optical centre."""
    return -(camera.rot.T @ camera.translation)


def project(camera: Camera, point: np.ndarray) -> np.ndarray:
    """Project one camera-frame point to continuous pixel coordinates (u, v).

    Raises NonPositiveDepthError when z <= 0; callers are expected to
    clip against the near plane first.
    """
    x, y, z = (float(v) for v in np.asarray(point, dtype=np.float64).reshape(3))
    if z <= 0.0:
        raise NonPositiveDepthError(f"cannot project point with depth z={z}")
    return np.array([camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy])


def project_points(camera: Camera, points: np.ndarray) -> np.ndarray:
    """Vectorized projection of (N, 3) camera-frame points, all with z > 0."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z = points[:, 2]
    if np.any(z <= 0.0):
        raise NonPositiveDepthError(f"cannot project points with depth z<=0 (min z={z.min()})")
    uv = np.empty((points.shape[0], 2))
    uv[:, 0] = camera.fx * points[:, 0] / z + camera.cx
    uv[:, 1] = camera.fy * points[:, 1] / z + camera.cy
    return uv


def _check_z_near(z_near: float) -> None:
    if not (z_near > 0.0) or not math.isfinite(z_near):
        raise OutOfRangeError(f"z_near must be positive and finite, got {z_near}")


def clip_polygon_near(vertices: np.ndarray, z_near: float = DEFAULT_Z_NEAR) -> np.ndarray:
    """Clip a camera-frame polygon against the plane z = z_near.

    Sutherland-Hodgman against the single near plane: vertices with
    z >= z_near are kept, edges that cross the plane gain the exact
    intersection point.  A polygon fully in front is returned unchanged;
    one fully behind comes back empty, shape (0, 3).
    """
    _check_z_near(z_near)
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    _check_finite("vertices", verts)
    if len(verts) == 0:
        return verts
    if np.all(verts[:, 2] >= z_near):
        return verts
    out: list[np.ndarray] = []
    for i in range(len(verts)):
        a = verts[i]
        b = verts[(i + 1) % len(verts)]
        a_in = a[2] >= z_near
        b_in = b[2] >= z_near
        if a_in:
            out.append(a)
        if a_in != b_in:
            s = (z_near - a[2]) / (b[2] - a[2])
            p = a + s * (b - a)
            p[2] = z_near
            out.append(p)
    if not out:
        return np.zeros((0, 3))
    return np.array(out)


def clip_segment_near(
    a: np.ndarray, b: np.ndarray, z_near: float = DEFAULT_Z_NEAR
) -> tuple[np.ndarray, np.ndarray] | None:
    """Clip one camera-frame segment to z >= z_near.

    Returns the clipped endpoint pair, or None when the segment lies
    entirely behind the plane.
    """
    _check_z_near(z_near)
    a = np.asarray(a, dtype=np.float64).reshape(3).copy()
    b = np.asarray(b, dtype=np.float64).reshape(3).copy()
    a_in = a[2] >= z_near
    b_in = b[2] >= z_near
    if not a_in and not b_in:
        return None
    if a_in and b_in:
        return a, b
    s = (z_near - a[2]) / (b[2] - a[2])
    p = a + s * (b - a)
    p[2] = z_near
    if a_in:
        return a, p
    return p, b


def visible_corner_points(
    camera: Camera, box: Box3D, z_near: float = DEFAULT_Z_NEAR
) -> np.ndarray:
    """Camera-frame corner cloud of a box, clipped edge-wise at the near plane.

    Corners in front of the plane are kept as-is; each of the 12 box
    edges that crosses the plane contributes its intersection point.
    The result (possibly empty) has every z >= z_near and is the point
    cloud that hull masks and 2D boxes are built from.
    """
    _check_z_near(z_near)
    cam = world_to_camera(camera, box_corners(box))
    pts: list[np.ndarray] = [cam[i] for i in range(8) if cam[i, 2] >= z_near]
    for i, j in EDGES:
        a, b = cam[i], cam[j]
        if (a[2] >= z_near) != (b[2] >= z_near):
            s = (z_near - a[2]) / (b[2] - a[2])
            p = a + s * (b - a)
            p[2] = z_near
            pts.append(p)
    if not pts:
        return np.zeros((0, 3))
    return np.array(pts)
