"""3D box conditioning, masking, cropping and pose-benchmark toolkit."""

from .errors import PoseboxError
from .geometry import Box3D, Camera, box_corners, normalize_angle, project
from .conditioning import (
    ConditioningMap,
    Palette,
    default_palette,
    encode_corners_2d,
    encode_corners_25d,
    fourier_embed,
    render_box_depthmap,
    render_pose_map,
    render_six_channel,
    render_visible_faces,
)
from .masks import BinaryMask, enlarge_box, find_occluders, hull_mask, occlusion_aware_mask
from .crops import CropSpec, apply_crop, bbox2d_of, square_crop_spec
from .benchmark import (
    EditInstruction,
    FilterRules,
    filter_by_detector,
    filter_instances,
    generate_placements,
    load_annotations,
    make_edit,
)
from .metrics import (
    EvalReport,
    FeatureSet,
    aggregate,
    frechet_distance,
    frechet_distance_from_moments,
    is_flipped,
    match_detection,
    translation_error,
    yaw_error,
)

__version__ = "0.1.0"

__all__ = [
    "Box3D",
    "Camera",
    "BinaryMask",
    "ConditioningMap",
    "CropSpec",
    "EditInstruction",
    "EvalReport",
    "FeatureSet",
    "FilterRules",
    "Palette",
    "PoseboxError",
    "aggregate",
    "apply_crop",
    "bbox2d_of",
    "box_corners",
    "default_palette",
    "encode_corners_2d",
    "encode_corners_25d",
    "enlarge_box",
    "filter_by_detector",
    "filter_instances",
    "find_occluders",
    "fourier_embed",
    "frechet_distance",
    "frechet_distance_from_moments",
    "generate_placements",
    "hull_mask",
    "is_flipped",
    "load_annotations",
    "make_edit",
    "match_detection",
    "normalize_angle",
    "occlusion_aware_mask",
    "project",
    "render_box_depthmap",
    "render_pose_map",
    "render_six_channel",
    "render_visible_faces",
    "square_crop_spec",
    "translation_error",
    "yaw_error",
]
