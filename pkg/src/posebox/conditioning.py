"""Conditioning signals derived from a single oriented box.

The full-detail signal is the pose map: the box mesh rendered with two
distinctly colored triangles per face, a colored disc at each corner
and a color-coded wireframe stamped on top.  Reduced variants drop
information step by step (per-face channels, visible faces only, a raw
depth plane) and two token encodings flatten the projected corners to
short vectors.  All rasterized variants share the fill rules in
`raster`, so their silhouettes are mutually consistent.
"""

from __future__ import annotations

import colorsys
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry, pngio, raster
from .errors import (
    BandCountZeroError,
    FullyBehindCameraError,
    NonPositiveDepthError,
    ParseError,
)
from .geometry import Box3D, Camera

CMAP_MAGIC = b"CMAP"

# Face color pairs (front, back, left, right, top, bottom) x (first,
# second triangle), 8-bit RGB.  Chosen so all 12 triangle colors are
# pairwise distinct and none collides with the wireframe hue ramp.
_FACE_COLORS_8BIT = (
    ((230, 25, 25), (160, 15, 15)),
    ((25, 80, 230), (15, 50, 160)),
    ((25, 200, 60), (15, 130, 40)),
    ((240, 200, 30), (170, 140, 20)),
    ((170, 60, 220), (110, 35, 150)),
    ((120, 120, 120), (70, 70, 70)),
)


@dataclass(frozen=True)
class Palette:
    """Colors for the pose-map mesh, all float RGB in [0, 1].

    face_colors:   (6, 2, 3), two triangle colors per face.
    edge_colors:   (12, 3), wireframe color per box edge.
    corner_colors: (8, 3), disc color per corner.
    """

    face_colors: np.ndarray
    edge_colors: np.ndarray
    corner_colors: np.ndarray

    def __post_init__(self) -> None:
        fc = np.asarray(self.face_colors, dtype=np.float64).reshape(6, 2, 3)
        ec = np.asarray(self.edge_colors, dtype=np.float64).reshape(12, 3)
        cc = np.asarray(self.corner_colors, dtype=np.float64).reshape(8, 3)
        tri = [tuple(fc[f, t]) for f in range(6) for t in range(2)]
        if len(set(tri)) != 12:
            raise ValueError("face triangle colors must be pairwise distinct")
        if set(tuple(e) for e in ec) & set(tri):
            raise ValueError("edge colors must differ from all face triangle colors")
        object.__setattr__(self, "face_colors", fc)
        object.__setattr__(self, "edge_colors", ec)
        object.__setattr__(self, "corner_colors", cc)


def default_palette() -> Palette:
    """The stock palette: fixed face pairs, a 12-hue wireframe ramp, white corners."""
    face = np.array(_FACE_COLORS_8BIT, dtype=np.float64) / 255.0
    edge = np.array([colorsys.hsv_to_rgb(k / 12.0, 1.0, 1.0) for k in range(12)])
    corner = np.ones((8, 3))
    return Palette(face, edge, corner)


def palette_hash(palette: Palette) -> str:
    """Stable hex digest identifying a palette's exact color values."""
    h = hashlib.sha256()
    for arr in (palette.face_colors, palette.edge_colors, palette.corner_colors):
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


@dataclass
class ConditioningMap:
    """A float32 image-shaped conditioning signal, channel-last."""

    data: np.ndarray  # (height, width, channels) float32

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def save_png(self, path: str | Path) -> None:
        """Write a 3-channel map as an 8-bit RGB PNG."""
        if self.channels != 3:
            raise ParseError(f"PNG export needs 3 channels, map has {self.channels}")
        pngio.save_rgb8(path, self.data)

    def save_depth_png(self, path: str | Path) -> None:
        """Write a 1-channel depth map (metres) as a 16-bit millimetre PNG."""
        if self.channels != 1:
            raise ParseError(f"depth export needs 1 channel, map has {self.channels}")
        pngio.save_depth16(path, self.data[:, :, 0])


def save_cmap(cmap: ConditioningMap, path: str | Path) -> None:
    """Write a map as a raw float32 tensor (CMAP, version 1, little-endian)."""
    pngio.write_tensor(path, CMAP_MAGIC, (cmap.height, cmap.width, cmap.channels), cmap.data)


def load_cmap(path: str | Path) -> ConditioningMap:
    """Read a CMAP tensor back into a ConditioningMap."""
    (h, w, c), flat = pngio.read_tensor(path, CMAP_MAGIC, 3)
    return ConditioningMap(flat.reshape(h, w, c))


def _camera_corners(camera: Camera, box: Box3D, z_near: float) -> np.ndarray:
    corners = geometry.world_to_camera(camera, geometry.box_corners(box))
    if not np.any(corners[:, 2] > z_near):
        raise FullyBehindCameraError(
            f"no box corner lies in front of the near plane z={z_near}"
        )
    return corners


def default_line_width(size: tuple[int, int]) -> float:
    """Wireframe stroke width: 3 px at 512 px, scaled with the smaller edge."""
    return max(1.0, 3.0 * min(size) / 512.0)


def _fill_box_triangles(target, corners, colors, camera, z_near) -> None:
    # colors: one color vector per mesh triangle, in face_triangles order.
    for idx, (_, (i, j, k)) in enumerate(geometry.face_triangles()):
        poly = geometry.clip_polygon_near(corners[[i, j, k]], z_near)
        for t in range(1, len(poly) - 1):
            raster.fill_triangle(target, poly[[0, t, t + 1]], colors[idx], camera)


def render_pose_map(
    camera: Camera,
    box: Box3D,
    size: tuple[int, int],
    palette: Palette | None = None,
    z_near: float = geometry.DEFAULT_Z_NEAR,
    corner_radius_scale: float = 0.04,
    line_width: float | None = None,
    with_corners: bool = True,
    with_wireframe: bool = True,
) -> ConditioningMap:
    """Render the full pose map for one box.

    Draw order is fixed: the 12 face triangles (z-buffered), then the
    corner discs (z-buffered billboards with radius corner_radius_scale
    times the smallest box dimension), then the wireframe stamped on
    top regardless of depth.  Background stays exactly (0, 0, 0).
    Raises FullyBehindCameraError when no corner is in front of the
    near plane.
    """
    palette = palette or default_palette()
    corners = _camera_corners(camera, box, z_near)
    target = raster.RasterTarget(size[0], size[1], 3)
    tri_colors = [palette.face_colors[fi, idx % 2] for idx, (fi, _) in enumerate(geometry.face_triangles())]
    _fill_box_triangles(target, corners, tri_colors, camera, z_near)
    if with_corners:
        radius = corner_radius_scale * min(box.size)
        for ci in range(8):
            if corners[ci, 2] >= z_near:
                raster.draw_disc(target, corners[ci], radius, palette.corner_colors[ci], camera)
    if with_wireframe:
        width = default_line_width(size) if line_width is None else line_width
        for ei, (i, j) in enumerate(geometry.EDGES):
            seg = geometry.clip_segment_near(corners[i], corners[j], z_near)
            if seg is None:
                continue
            pts = np.array([geometry.project(camera, seg[0]), geometry.project(camera, seg[1])])
            raster.draw_polyline(target, pts, palette.edge_colors[ei], width)
    return ConditioningMap(target.channels)


def render_six_channel(
    camera: Camera,
    box: Box3D,
    size: tuple[int, int],
    z_near: float = geometry.DEFAULT_Z_NEAR,
) -> ConditioningMap:
    """Six-plane face indicator: channel k is 1.0 where face k is nearest.

    Channels follow the fixed face order (front, back, left, right,
    top, bottom) and are mutually exclusive per pixel.
    """
    corners = _camera_corners(camera, box, z_near)
    target = raster.RasterTarget(size[0], size[1], 6)
    colors = []
    for fi, _ in geometry.face_triangles():
        c = np.zeros(6, dtype=np.float32)
        c[fi] = 1.0
        colors.append(c)
    _fill_box_triangles(target, corners, colors, camera, z_near)
    return ConditioningMap(target.channels)


def render_visible_faces(
    camera: Camera,
    box: Box3D,
    size: tuple[int, int],
    palette: Palette | None = None,
    z_near: float = geometry.DEFAULT_Z_NEAR,
) -> ConditioningMap:
    """Render only camera-facing faces, each in its solid first-pair color.

    A face is drawn when the outward normal points away from the
    camera direction: dot(normal, centroid) < 0 in the camera frame.
    No wireframe and no corner discs.
    """
    palette = palette or default_palette()
    corners = _camera_corners(camera, box, z_near)
    target = raster.RasterTarget(size[0], size[1], 3)
    for fi, (_, cycle) in enumerate(geometry.FACES):
        quad = corners[list(cycle)]
        normal = np.cross(quad[1] - quad[0], quad[2] - quad[0])
        if float(normal @ quad.mean(axis=0)) >= 0.0:
            continue
        poly = geometry.clip_polygon_near(quad, z_near)
        for t in range(1, len(poly) - 1):
            raster.fill_triangle(target, poly[[0, t, t + 1]], palette.face_colors[fi, 0], camera)
    return ConditioningMap(target.channels)


def render_box_depthmap(
    camera: Camera,
    box: Box3D,
    size: tuple[int, int],
    z_near: float = geometry.DEFAULT_Z_NEAR,
) -> ConditioningMap:
    """Depth of the box mesh alone, in metres; background pixels are 0.

    This is the z-buffer of the untextured box, not a scene depth map.
    """
    corners = _camera_corners(camera, box, z_near)
    target = raster.RasterTarget(size[0], size[1], 0)
    colors = [np.zeros(0, dtype=np.float32)] * 12
    _fill_box_triangles(target, corners, colors, camera, z_near)
    depth = np.where(np.isfinite(target.depth), target.depth, 0.0).astype(np.float32)
    return ConditioningMap(depth[:, :, np.newaxis])


def encode_corners_2d(camera: Camera, box: Box3D) -> np.ndarray:
    """Flatten the projected corners to 16 values: (u/width, v/height) each.

    Coordinates are image-normalized but deliberately unclamped, so
    corners outside the frame fall outside [0, 1].  Raises
    NonPositiveDepthError when any corner has z <= 0.
    """
    corners = geometry.world_to_camera(camera, geometry.box_corners(box))
    if np.any(corners[:, 2] <= 0.0):
        raise NonPositiveDepthError("corner encoding needs all corners at z > 0")
    uv = geometry.project_points(camera, corners)
    out = np.empty((8, 2))
    out[:, 0] = uv[:, 0] / camera.width
    out[:, 1] = uv[:, 1] / camera.height
    return out.reshape(16)


def encode_corners_25d(camera: Camera, box: Box3D) -> np.ndarray:
    """Flatten the projected corners to 24 values: (u/width, v/height, z) each.

    Like encode_corners_2d but keeping the camera-frame depth in metres
    as every third component.
    """
    corners = geometry.world_to_camera(camera, geometry.box_corners(box))
    if np.any(corners[:, 2] <= 0.0):
        raise NonPositiveDepthError("corner encoding needs all corners at z > 0")
    uv = geometry.project_points(camera, corners)
    out = np.empty((8, 3))
    out[:, 0] = uv[:, 0] / camera.width
    out[:, 1] = uv[:, 1] / camera.height
    out[:, 2] = corners[:, 2]
    return out.reshape(24)


def fourier_embed(values: np.ndarray, n_bands: int = 8) -> np.ndarray:
    """Sinusoidal embedding of a vector at octave frequencies.

    Component x contributes sin(2^k * pi * x) and cos(2^k * pi * x) for
    k = 0 .. n_bands-1, ordered component-major and band-minor with sin
    before cos, so the result has 2 * n_bands * len(values) entries.
    """
    if n_bands < 1:
        raise BandCountZeroError(f"need at least one frequency band, got {n_bands}")
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    freqs = (2.0 ** np.arange(n_bands)) * np.pi
    angles = v[:, np.newaxis] * freqs[np.newaxis, :]
    out = np.stack([np.sin(angles), np.cos(angles)], axis=2)
    return out.reshape(-1)
