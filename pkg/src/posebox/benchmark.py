"""Benchmark data plumbing: annotations, filters, edit instructions.

JSON schemas (all floats plain decimal, angles radians, lengths metres):

annotations.json
    {"frames": [{"frame_token", "camera": {"fx", "fy", "cx", "cy",
                 "width", "height", "rotation": [w, x, y, z],
                 "translation": [x, y, z]}, "image_path"}],
     "instances": [{"instance_token", "frame_token", "category",
                    "center": [x, y, z], "size": [w, l, h], "yaw",
                    "visibility"}]}

detections.json
    {"frames": {frame_token: [{"category", "center", "size", "yaw",
                               "score"}]}}

drivable.json
    {frame_token: {"polygon": [[x, y], ...], "ego_yaw"}}

instructions.json
    {"instructions": [{"kind", "frame_token", "instance_token",
                       "category", "center", "size", "yaw"}
                      + "delta_yaw" for rotate, "factors" for enlarge]}

Drivable polygons, ego yaw and box centres share one world frame whose
ground plane is z = 0; placement points are sampled on that plane.
Visibility is the 1..4 occlusion grade of the source dataset (4 =
fully visible).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import crops, geometry, masks, metrics
from .errors import (
    DanglingReferenceError,
    EmptyDrivableRegionError,
    FullyBehindCameraError,
    OutOfRangeError,
    ParseError,
    SchemaViolationError,
)
from .geometry import Box3D, Camera

EDIT_KINDS = ("replace", "flip", "rotate", "enlarge", "place")

DEFAULT_TEMPLATE_SIZE = (1.9, 4.6, 1.7)  # a typical car (w, l, h)

# Ground-plane distance bands, metres from the camera, used to
# stratify the three placement points of a frame: [8,16), [16,28), [28,40].
PLACEMENT_BANDS = ((8.0, 16.0), (16.0, 28.0), (28.0, 40.0))

MAX_REJECTION_TRIES = 10_000


@dataclass(frozen=True)
class FrameRecord:
    frame_token: str
    camera: Camera
    image_path: str


@dataclass(frozen=True)
class InstanceRecord:
    instance_token: str
    frame_token: str
    category: str
    box: Box3D
    visibility: int


@dataclass(frozen=True)
class DetectionRecord:
    frame_token: str
    category: str
    box: Box3D
    score: float


@dataclass(frozen=True)
class DrivableRecord:
    frame_token: str
    polygon: np.ndarray  # (N, 2) ground-plane vertices, world frame
    ego_yaw: float


@dataclass(frozen=True)
class EditInstruction:
    """One benchmark edit: the target box after the edit plus provenance.

    instance_token is empty for placements (there is no source object).
    delta_yaw is set only for rotate edits, factors only for enlarge.
    """

    kind: str
    frame_token: str
    instance_token: str
    category: str
    box: Box3D
    delta_yaw: float | None = None
    factors: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        if self.kind not in EDIT_KINDS:
            raise OutOfRangeError(f"unknown edit kind {self.kind!r}, expected one of {EDIT_KINDS}")


@dataclass(frozen=True)
class FilterRules:
    """Benchmark instance filter thresholds (all boundaries inclusive on the keep side)."""

    categories: frozenset[str] = frozenset({"car", "truck", "bus"})
    min_side_px: float = 96.0
    min_dist_m: float = 4.0
    max_dist_m: float = 40.0
    min_visibility: int = 3


def _load_json(path: str | Path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _need(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaViolationError(f"{where}: missing field {key!r}")
    return obj[key]


def _floats(value, n: int, where: str) -> list[float]:
    try:
        vals = [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise SchemaViolationError(f"{where}: expected {n} numbers, got {value!r}") from exc
    if len(vals) != n or not all(math.isfinite(v) for v in vals):
        raise SchemaViolationError(f"{where}: expected {n} finite numbers, got {value!r}")
    return vals


def _camera_from_json(obj: dict, where: str) -> Camera:
    try:
        return Camera(
            fx=float(_need(obj, "fx", where)),
            fy=float(_need(obj, "fy", where)),
            cx=float(_need(obj, "cx", where)),
            cy=float(_need(obj, "cy", where)),
            width=int(_need(obj, "width", where)),
            height=int(_need(obj, "height", where)),
            rotation=_floats(_need(obj, "rotation", where), 4, where),
            translation=_floats(_need(obj, "translation", where), 3, where),
        )
    except (OutOfRangeError, ValueError, TypeError) as exc:
        raise SchemaViolationError(f"{where}: {exc}") from exc


def _camera_to_json(cam: Camera) -> dict:
    return {
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "width": cam.width,
        "height": cam.height,
        "rotation": [float(v) for v in cam.rotation],
        "translation": [float(v) for v in cam.translation],
    }


def _box_from_json(obj: dict, where: str) -> Box3D:
    try:
        return Box3D(
            center=_floats(_need(obj, "center", where), 3, where),
            size=tuple(_floats(_need(obj, "size", where), 3, where)),
            yaw=float(_need(obj, "yaw", where)),
        )
    except (OutOfRangeError, ValueError, TypeError) as exc:
        raise SchemaViolationError(f"{where}: {exc}") from exc


def _box_to_json(box: Box3D) -> dict:
    return {
        "center": [float(v) for v in box.center],
        "size": [float(v) for v in box.size],
        "yaw": float(box.yaw),
    }


def load_annotations(path: str | Path) -> tuple[list[FrameRecord], list[InstanceRecord]]:
    """Read annotations.json; validates structure and frame references."""
    obj = _load_json(path)
    frames: list[FrameRecord] = []
    tokens: set[str] = set()
    for i, fr in enumerate(obj.get("frames", [])):
        where = f"frames[{i}]"
        token = str(_need(fr, "frame_token", where))
        if token in tokens:
            raise SchemaViolationError(f"{where}: duplicate frame_token {token!r}")
        tokens.add(token)
        frames.append(
            FrameRecord(
                frame_token=token,
                camera=_camera_from_json(_need(fr, "camera", where), f"{where}.camera"),
                image_path=str(fr.get("image_path", "")),
            )
        )
    instances: list[InstanceRecord] = []
    for i, inst in enumerate(obj.get("instances", [])):
        where = f"instances[{i}]"
        token = str(_need(inst, "instance_token", where))
        where = f"instances[{i}] ({token!r})"
        frame_token = str(_need(inst, "frame_token", where))
        if frame_token not in tokens:
            raise DanglingReferenceError(
                f"{where}: references missing frame {frame_token!r}"
            )
        category = str(_need(inst, "category", where))
        if not category:
            raise SchemaViolationError(f"{where}: empty category")
        visibility = _need(inst, "visibility", where)
        if not isinstance(visibility, int) or not 1 <= visibility <= 4:
            raise SchemaViolationError(
                f"{where}: visibility must be an integer in 1..4, got {visibility!r}"
            )
        instances.append(
            InstanceRecord(
                instance_token=token,
                frame_token=frame_token,
                category=category,
                box=_box_from_json(inst, where),
                visibility=visibility,
            )
        )
    return frames, instances


def save_annotations(
    frames: list[FrameRecord], instances: list[InstanceRecord], path: str | Path
) -> None:
    obj = {
        "frames": [
            {
                "frame_token": f.frame_token,
                "camera": _camera_to_json(f.camera),
                "image_path": f.image_path,
            }
            for f in frames
        ],
        "instances": [
            {
                "instance_token": i.instance_token,
                "frame_token": i.frame_token,
                "category": i.category,
                **_box_to_json(i.box),
                "visibility": i.visibility,
            }
            for i in instances
        ],
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def load_detections(path: str | Path) -> dict[str, list[DetectionRecord]]:
    """Read detections.json as a frame_token -> detections mapping."""
    obj = _load_json(path)
    out: dict[str, list[DetectionRecord]] = {}
    for token, dets in _need(obj, "frames", str(path)).items():
        rows = []
        for i, det in enumerate(dets):
            where = f"frames[{token!r}][{i}]"
            score = float(_need(det, "score", where))
            if not 0.0 <= score <= 1.0:
                raise SchemaViolationError(f"{where}: score must be in [0, 1], got {score}")
            category = str(_need(det, "category", where))
            if not category:
                raise SchemaViolationError(f"{where}: empty category")
            rows.append(
                DetectionRecord(
                    frame_token=str(token),
                    category=category,
                    box=_box_from_json(det, where),
                    score=score,
                )
            )
        out[str(token)] = rows
    return out


def save_detections(detections: dict[str, list[DetectionRecord]], path: str | Path) -> None:
    obj = {
        "frames": {
            token: [
                {
                    "category": d.category,
                    **_box_to_json(d.box),
                    "score": d.score,
                }
                for d in dets
            ]
            for token, dets in detections.items()
        }
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def load_drivable(path: str | Path) -> dict[str, DrivableRecord]:
    obj = _load_json(path)
    out: dict[str, DrivableRecord] = {}
    for token, rec in obj.items():
        where = f"drivable[{token!r}]"
        poly_raw = _need(rec, "polygon", where)
        poly = np.array([_floats(p, 2, where) for p in poly_raw], dtype=np.float64)
        out[str(token)] = DrivableRecord(
            frame_token=str(token),
            polygon=poly,
            ego_yaw=float(_need(rec, "ego_yaw", where)),
        )
    return out


def save_drivable(records: dict[str, DrivableRecord], path: str | Path) -> None:
    obj = {
        token: {
            "polygon": [[float(x), float(y)] for x, y in rec.polygon],
            "ego_yaw": float(rec.ego_yaw),
        }
        for token, rec in records.items()
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def instruction_to_json(instr: EditInstruction) -> dict:
    obj = {
        "kind": instr.kind,
        "frame_token": instr.frame_token,
        "instance_token": instr.instance_token,
        "category": instr.category,
        **_box_to_json(instr.box),
    }
    if instr.delta_yaw is not None:
        obj["delta_yaw"] = float(instr.delta_yaw)
    if instr.factors is not None:
        obj["factors"] = [float(v) for v in instr.factors]
    return obj


def save_instructions(instructions: list[EditInstruction], path: str | Path) -> None:
    obj = {"instructions": [instruction_to_json(i) for i in instructions]}
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def load_instructions(path: str | Path) -> list[EditInstruction]:
    obj = _load_json(path)
    out = []
    for i, rec in enumerate(_need(obj, "instructions", str(path))):
        where = f"instructions[{i}]"
        kind = str(_need(rec, "kind", where))
        if kind not in EDIT_KINDS:
            raise SchemaViolationError(f"{where}: unknown kind {kind!r}")
        factors = rec.get("factors")
        out.append(
            EditInstruction(
                kind=kind,
                frame_token=str(_need(rec, "frame_token", where)),
                instance_token=str(rec.get("instance_token", "")),
                category=str(_need(rec, "category", where)),
                box=_box_from_json(rec, where),
                delta_yaw=float(rec["delta_yaw"]) if "delta_yaw" in rec else None,
                factors=tuple(_floats(factors, 3, where)) if factors is not None else None,
            )
        )
    return out


def clamped_bbox_size(camera: Camera, box: Box3D) -> tuple[float, float]:
    """Projected 2D box size in pixels after clamping to the image bounds."""
    rect = crops.bbox2d_of(camera, box)
    x0 = min(max(rect[0], 0.0), float(camera.width))
    x1 = min(max(rect[2], 0.0), float(camera.width))
    y0 = min(max(rect[1], 0.0), float(camera.height))
    y1 = min(max(rect[3], 0.0), float(camera.height))
    return x1 - x0, y1 - y0


def filter_instances(
    instances: list[InstanceRecord],
    frames: list[FrameRecord],
    rules: FilterRules | None = None,
) -> list[InstanceRecord]:
    """Keep benchmark-worthy instances, preserving input order.

    An instance survives when its category is allowed, its visibility
    grade reaches the minimum, its camera-to-centre distance lies in
    [min_dist_m, max_dist_m], and the smaller side of its clamped
    projected 2D box is at least min_side_px.
    """
    rules = rules or FilterRules()
    frame_map = {f.frame_token: f for f in frames}
    kept = []
    for inst in instances:
        if inst.frame_token not in frame_map:
            raise DanglingReferenceError(
                f"instance {inst.instance_token!r} references missing frame {inst.frame_token!r}"
            )
        if inst.category not in rules.categories:
            continue
        if inst.visibility < rules.min_visibility:
            continue
        cam = frame_map[inst.frame_token].camera
        dist = float(np.linalg.norm(geometry.world_to_camera(cam, inst.box.center)))
        if dist < rules.min_dist_m or dist > rules.max_dist_m:
            continue
        try:
            w_px, h_px = clamped_bbox_size(cam, inst.box)
        except FullyBehindCameraError:
            continue
        if min(w_px, h_px) < rules.min_side_px:
            continue
        kept.append(inst)
    return kept


def filter_by_detector(
    instances: list[InstanceRecord],
    detections: dict[str, list[DetectionRecord]],
    max_yaw_error: float = math.radians(3.0),
    max_center_dist: float = 2.0,
) -> list[InstanceRecord]:
    """Keep instances a detector reproduces with small yaw error.

    Each instance is matched against its frame's detections (same
    category, nearest ground-plane centre within max_center_dist); it
    survives only when matched and the matched yaw error does not
    exceed max_yaw_error (default 3 degrees).
    """
    kept = []
    for inst in instances:
        det = metrics.match_box(
            inst.category, inst.box, detections.get(inst.frame_token, []), max_center_dist
        )
        if det is None:
            continue
        if metrics.yaw_error(inst.box.yaw, det.box.yaw) > max_yaw_error:
            continue
        kept.append(inst)
    return kept


def make_edit(
    instance: InstanceRecord,
    kind: str,
    delta_yaw: float | None = None,
    factors: float | tuple[float, float, float] | None = None,
) -> EditInstruction:
    """Build the edit instruction of one kind for an annotated instance.

    replace keeps the box unchanged (regenerate in place); flip adds pi
    to the yaw; rotate adds delta_yaw; enlarge scales the size by
    factors.  Yaw results are normalized by Box3D itself.
    """
    box = instance.box
    norm_factors: tuple[float, float, float] | None = None
    if kind == "replace":
        out_box = box
    elif kind == "flip":
        out_box = Box3D(box.center, box.size, box.yaw + math.pi)
    elif kind == "rotate":
        if delta_yaw is None:
            raise OutOfRangeError("rotate edit needs delta_yaw")
        out_box = Box3D(box.center, box.size, box.yaw + delta_yaw)
    elif kind == "enlarge":
        if factors is None:
            raise OutOfRangeError("enlarge edit needs factors")
        out_box = masks.enlarge_box(box, factors)
        norm_factors = tuple(o / s for o, s in zip(out_box.size, box.size))
    else:
        raise OutOfRangeError(f"unknown edit kind {kind!r}, expected one of {EDIT_KINDS[:4]}")
    return EditInstruction(
        kind=kind,
        frame_token=instance.frame_token,
        instance_token=instance.instance_token,
        category=instance.category,
        box=out_box,
        delta_yaw=float(delta_yaw) if kind == "rotate" else None,
        factors=norm_factors,
    )


def _polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def point_in_polygon(point: np.ndarray, polygon: np.ndarray) -> bool:
    """Even-odd ray-cast test for a simple polygon."""
    x, y = float(point[0]), float(point[1])
    inside = False
    n = len(polygon)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            x_int = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_int:
                inside = not inside
    return inside


def _frame_rng(seed: int, frame_token: str) -> np.random.Generator:
    # Stable across platforms: PCG64 keyed by (seed, sha256(frame_token)).
    digest = hashlib.sha256(frame_token.encode("utf-8")).digest()
    token_key = int.from_bytes(digest[:8], "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, token_key])))


def _sample_point(
    rng: np.random.Generator,
    polygon: np.ndarray,
    cam_xy: np.ndarray,
    band: tuple[float, float] | None,
    last_band: bool,
) -> np.ndarray | None:
    lo = polygon.min(axis=0)
    hi = polygon.max(axis=0)
    proposals = rng.uniform(lo, hi, size=(MAX_REJECTION_TRIES, 2))
    for p in proposals:
        if not point_in_polygon(p, polygon):
            continue
        if band is not None:
            d = float(np.hypot(p[0] - cam_xy[0], p[1] - cam_xy[1]))
            if d < band[0]:
                continue
            if (d > band[1]) if last_band else (d >= band[1]):
                continue
        return p
    return None


def generate_placements(
    frames: list[FrameRecord],
    drivable: dict[str, DrivableRecord],
    template_size: tuple[float, float, float] = DEFAULT_TEMPLATE_SIZE,
    seed: int = 0,
    category: str = "car",
) -> list[EditInstruction]:
    """Sample insertion points and emit 24 placement edits per frame.

    Per frame: three points uniform in the drivable polygon, one per
    ground-distance band ([8,16), [16,28), [28,40] metres from the
    camera; a band with no admissible area after 10,000 rejected
    proposals falls back to the whole polygon), each combined with 8
    yaws at 45-degree steps starting at the frame's ego yaw.  The
    template box sits on the ground plane, so its centre height is
    half the template height.  Sampling uses a PCG64 stream keyed by
    (seed, sha256 of the frame token), making every frame independent
    and the whole batch reproducible at any thread count.
    """
    out: list[EditInstruction] = []
    w, l, h = (float(v) for v in template_size)
    for frame in frames:
        if frame.frame_token not in drivable:
            raise DanglingReferenceError(
                f"no drivable polygon for frame {frame.frame_token!r}"
            )
        region = drivable[frame.frame_token]
        polygon = np.asarray(region.polygon, dtype=np.float64).reshape(-1, 2)
        if len(polygon) < 3 or abs(_polygon_area(polygon)) <= 0.0:
            raise EmptyDrivableRegionError(
                f"frame {frame.frame_token!r}: drivable polygon has no area"
            )
        rng = _frame_rng(seed, frame.frame_token)
        cam_xy = geometry.camera_center_world(frame.camera)[:2]
        for bi, band in enumerate(PLACEMENT_BANDS):
            point = _sample_point(rng, polygon, cam_xy, band, bi == len(PLACEMENT_BANDS) - 1)
            if point is None:
                point = _sample_point(rng, polygon, cam_xy, None, False)
            if point is None:
                raise EmptyDrivableRegionError(
                    f"frame {frame.frame_token!r}: no admissible point after "
                    f"{MAX_REJECTION_TRIES} proposals"
                )
            for k in range(8):
                yaw = geometry.normalize_angle(region.ego_yaw + k * math.pi / 4.0)
                out.append(
                    EditInstruction(
                        kind="place",
                        frame_token=frame.frame_token,
                        instance_token="",
                        category=category,
                        box=Box3D((float(point[0]), float(point[1]), h / 2.0), (w, l, h), yaw),
                    )
                )
    return out
