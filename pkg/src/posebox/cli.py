"""Command-line interface.

Subcommands:
    render   conditioning maps per instance (PNG / CMAP / JSON + sidecar)
    mask     hull and occlusion-aware inpainting masks per instance
    crop     square crops of the frame images around each instance
    filter   benchmark instance filtering, optionally detector-checked
    place    placement edit instructions sampled on drivable polygons
    eval     score instructions against detections, report + table
    fid      Frechet distance between two feature files

Every command takes --out DIR and drops its outputs under fixed names
there, next to a config.json echoing the effective semantic settings
(CLI flags override a --config JSON file, which overrides defaults;
--threads is execution-only and deliberately not part of the echo, so
output trees are byte-identical at any thread count).

Exit codes: 0 on success, 2 when some instances or frames were
skipped (each skip is listed on stderr), 1 on fatal errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from . import benchmark, conditioning, crops, masks, metrics, pngio
from .errors import (
    DegenerateProjectionError,
    EmptyDrivableRegionError,
    FullyBehindCameraError,
    NonPositiveDepthError,
    PoseboxError,
)

VARIANTS = ("pose_map", "six_channel", "faces", "box_depth", "corners2d", "corners25d")


@dataclasses.dataclass
class RunConfig:
    """Semantic settings shared across subcommands (everything that shapes output bytes)."""

    variant: str = "pose_map"
    size: tuple[int, int] | None = None  # None: render at the camera's resolution
    cropped: bool = False
    crop_factor: float = crops.DEFAULT_CROP_FACTOR
    out_edge: int = crops.DEFAULT_OUT_EDGE
    seed: int = 0
    metric_mode: str = "ground_plane"
    z_near: float = 0.1
    occluder_min_pixels: int = 1
    max_center_dist: float = 2.0
    max_yaw_error_deg: float = 3.0
    categories: tuple[str, ...] = ("car", "truck", "bus")
    min_side_px: float = 96.0
    min_dist_m: float = 4.0
    max_dist_m: float = 40.0
    min_visibility: int = 3

    def filter_rules(self) -> benchmark.FilterRules:
        return benchmark.FilterRules(
            categories=frozenset(self.categories),
            min_side_px=self.min_side_px,
            min_dist_m=self.min_dist_m,
            max_dist_m=self.max_dist_m,
            min_visibility=self.min_visibility,
        )

    def to_json(self) -> dict:
        obj = dataclasses.asdict(self)
        obj["size"] = list(self.size) if self.size else None
        obj["categories"] = list(self.categories)
        return obj


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from exc


def _build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            values = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise PoseboxError(f"cannot read config {args.config}: {exc}") from exc
        known = {f.name for f in dataclasses.fields(RunConfig)}
        for key, value in values.items():
            if key not in known:
                raise PoseboxError(f"unknown config key {key!r} in {args.config}")
            if key == "size" and value is not None:
                value = tuple(int(v) for v in value)
            if key == "categories":
                value = tuple(str(v) for v in value)
            setattr(cfg, key, value)
    for f in dataclasses.fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            if f.name == "categories":
                value = tuple(s.strip() for s in value.split(",") if s.strip())
            setattr(cfg, f.name, value)
    if cfg.variant not in VARIANTS:
        raise PoseboxError(f"unknown variant {cfg.variant!r}, expected one of {VARIANTS}")
    if cfg.metric_mode not in metrics.METRIC_MODES + ("both",):
        raise PoseboxError(f"unknown metric mode {cfg.metric_mode!r}")
    return cfg


def _echo_config(cfg: RunConfig, command: str, out_dir: Path) -> None:
    obj = {"command": command, **cfg.to_json()}
    (out_dir / "config.json").write_text(json.dumps(obj, indent=2) + "\n")


def _select_instances(args, cfg: RunConfig):
    frames, instances = benchmark.load_annotations(args.annotations)
    if getattr(args, "instances", None):
        wanted = [s.strip() for s in args.instances.split(",") if s.strip()]
        by_token = {i.instance_token: i for i in instances}
        missing = [t for t in wanted if t not in by_token]
        if missing:
            raise PoseboxError(f"unknown instance tokens: {', '.join(missing)}")
        selected = [by_token[t] for t in wanted]
    else:
        selected = benchmark.filter_instances(instances, frames, cfg.filter_rules())
    return frames, instances, selected


def _run_tasks(tasks, threads: int):
    """Run (label, fn) pairs, collecting (label, error-or-None); order-stable."""
    results = []
    if threads <= 1:
        for label, fn in tasks:
            try:
                fn()
                results.append((label, None))
            except (
                FullyBehindCameraError,
                DegenerateProjectionError,
                NonPositiveDepthError,
                FileNotFoundError,
            ) as exc:
                results.append((label, exc))
        return results
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [(label, pool.submit(fn)) for label, fn in tasks]
        for label, fut in futures:
            try:
                fut.result()
                results.append((label, None))
            except (
                FullyBehindCameraError,
                DegenerateProjectionError,
                NonPositiveDepthError,
                FileNotFoundError,
            ) as exc:
                results.append((label, exc))
    return results


def _report_skips(results, what: str) -> int:
    skipped = [(label, exc) for label, exc in results if exc is not None]
    for label, exc in skipped:
        print(f"skipped {what} {label}: {exc}", file=sys.stderr)
    return 2 if skipped else 0


def _render_one(inst, frame, cfg: RunConfig, out_dir: Path) -> None:
    cam = frame.camera
    size = cfg.size or (cam.width, cam.height)
    palette = conditioning.default_palette()
    token = inst.instance_token

    crop_spec = None
    if cfg.cropped and cfg.variant not in ("corners2d", "corners25d"):
        rect = crops.bbox2d_of(cam, inst.box, cfg.z_near)
        crop_spec = crops.square_crop_spec(
            rect, size, factor=cfg.crop_factor, out_edge=cfg.out_edge
        )

    def finish(data: np.ndarray) -> np.ndarray:
        if crop_spec is None:
            return data
        return crops.apply_crop(data, crop_spec)

    meta = {
        "instance_token": token,
        "frame_token": inst.frame_token,
        "variant": cfg.variant,
        "palette_hash": conditioning.palette_hash(palette),
        "crop": crop_spec.to_json() if crop_spec else None,
    }
    if cfg.variant == "pose_map":
        cmap = conditioning.render_pose_map(cam, inst.box, size, palette, cfg.z_near)
        pngio.save_rgb8(out_dir / f"{token}.png", finish(cmap.data))
    elif cfg.variant == "faces":
        cmap = conditioning.render_visible_faces(cam, inst.box, size, palette, cfg.z_near)
        pngio.save_rgb8(out_dir / f"{token}.png", finish(cmap.data))
    elif cfg.variant == "box_depth":
        cmap = conditioning.render_box_depthmap(cam, inst.box, size, cfg.z_near)
        pngio.save_depth16(out_dir / f"{token}.png", finish(cmap.data)[:, :, 0])
    elif cfg.variant == "six_channel":
        cmap = conditioning.render_six_channel(cam, inst.box, size, cfg.z_near)
        out = conditioning.ConditioningMap(np.ascontiguousarray(finish(cmap.data), dtype=np.float32))
        conditioning.save_cmap(out, out_dir / f"{token}.cmap")
    elif cfg.variant == "corners2d":
        meta["values"] = [float(v) for v in conditioning.encode_corners_2d(cam, inst.box)]
    else:  # corners25d
        meta["values"] = [float(v) for v in conditioning.encode_corners_25d(cam, inst.box)]
    (out_dir / f"{token}.meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def cmd_render(args) -> int:
    cfg = _build_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames, _, selected = _select_instances(args, cfg)
    frame_map = {f.frame_token: f for f in frames}
    tasks = [
        (
            inst.instance_token,
            (lambda i=inst: _render_one(i, frame_map[i.frame_token], cfg, out_dir)),
        )
        for inst in selected
    ]
    results = _run_tasks(tasks, args.threads)
    _echo_config(cfg, "render", out_dir)
    return _report_skips(results, "instance")


def _mask_one(inst, frame, frame_instances, cfg: RunConfig, out_dir: Path, occ_dir: Path | None):
    cam = frame.camera
    size = cfg.size or (cam.width, cam.height)
    hull = masks.hull_mask(cam, inst.box, size, cfg.z_near)
    hull.save_png(out_dir / f"{inst.instance_token}.hull.png")

    ids = {tok: i + 1 for i, (tok, _) in enumerate(frame_instances)}
    boxes = [(ids[tok], box) for tok, box in frame_instances]
    occluders = masks.find_occluders(
        cam, ids[inst.instance_token], boxes, size, cfg.z_near, cfg.occluder_min_pixels
    )
    token_of = {v: k for k, v in ids.items()}
    occ_tokens = sorted(token_of[i] for i in occluders)
    print(
        f"{inst.instance_token}: occluders = {occ_tokens if occ_tokens else 'none'}",
        file=sys.stderr,
    )
    missing: list[str] = []
    occ_masks = []
    for tok in occ_tokens:
        if occ_dir is not None:
            path = occ_dir / f"{tok}.png"
            if path.exists():
                occ_masks.append(masks.BinaryMask.load_png(path))
            else:
                missing.append(str(path))
        else:
            occ_box = dict(frame_instances)[tok]
            occ_masks.append(masks.hull_mask(cam, occ_box, size, cfg.z_near))
    final = masks.occlusion_aware_mask(hull, occ_masks)
    final.save_png(out_dir / f"{inst.instance_token}.mask.png")
    if missing:
        raise FileNotFoundError(
            f"occluder masks missing ({', '.join(missing)}); wrote hull-only subtraction"
        )


def cmd_mask(args) -> int:
    cfg = _build_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames, instances, selected = _select_instances(args, cfg)
    frame_map = {f.frame_token: f for f in frames}
    per_frame: dict[str, list] = {}
    for inst in instances:
        per_frame.setdefault(inst.frame_token, []).append((inst.instance_token, inst.box))
    occ_dir = Path(args.occluder_masks) if args.occluder_masks else None
    tasks = [
        (
            inst.instance_token,
            (
                lambda i=inst: _mask_one(
                    i, frame_map[i.frame_token], per_frame[i.frame_token], cfg, out_dir, occ_dir
                )
            ),
        )
        for inst in selected
    ]
    results = _run_tasks(tasks, args.threads)
    _echo_config(cfg, "mask", out_dir)
    return _report_skips(results, "instance")


def _crop_one(inst, frame, cfg: RunConfig, out_dir: Path, annotations_dir: Path) -> None:
    cam = frame.camera
    image_path = Path(frame.image_path)
    if not image_path.is_absolute():
        image_path = annotations_dir / image_path
    if not image_path.exists():
        raise FileNotFoundError(f"frame image {image_path} not found")
    image = pngio.load_rgb8(image_path)
    rect = crops.bbox2d_of(cam, inst.box, cfg.z_near)
    spec = crops.square_crop_spec(
        rect, (cam.width, cam.height), factor=cfg.crop_factor, out_edge=cfg.out_edge
    )
    out = crops.apply_crop(image, spec)
    Image.fromarray(out, mode="RGB").save(out_dir / f"{inst.instance_token}.png", format="PNG")
    crops.save_crop_spec(spec, out_dir / f"{inst.instance_token}.json")


def cmd_crop(args) -> int:
    cfg = _build_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames, _, selected = _select_instances(args, cfg)
    frame_map = {f.frame_token: f for f in frames}
    annotations_dir = Path(args.annotations).resolve().parent
    tasks = [
        (
            inst.instance_token,
            (
                lambda i=inst: _crop_one(
                    i, frame_map[i.frame_token], cfg, out_dir, annotations_dir
                )
            ),
        )
        for inst in selected
    ]
    results = _run_tasks(tasks, args.threads)
    _echo_config(cfg, "crop", out_dir)
    return _report_skips(results, "instance")


def cmd_filter(args) -> int:
    cfg = _build_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames, instances = benchmark.load_annotations(args.annotations)
    kept = benchmark.filter_instances(instances, frames, cfg.filter_rules())
    if args.detections:
        detections = benchmark.load_detections(args.detections)
        kept = benchmark.filter_by_detector(
            kept,
            detections,
            max_yaw_error=math.radians(cfg.max_yaw_error_deg),
            max_center_dist=cfg.max_center_dist,
        )
    benchmark.save_annotations(frames, kept, out_dir / "annotations.json")
    _echo_config(cfg, "filter", out_dir)
    print(f"kept {len(kept)} of {len(instances)} instances")
    return 0


def cmd_place(args) -> int:
    cfg = _build_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames, _ = benchmark.load_annotations(args.annotations)
    drivable = benchmark.load_drivable(args.drivable)
    instructions = []
    skipped = []
    for frame in frames:
        try:
            instructions.extend(
                benchmark.generate_placements(
                    [frame], drivable, seed=cfg.seed
                )
            )
        except EmptyDrivableRegionError as exc:
            skipped.append((frame.frame_token, exc))
    benchmark.save_instructions(instructions, out_dir / "instructions.json")
    _echo_config(cfg, "place", out_dir)
    print(f"wrote {len(instructions)} placement instructions")
    for token, exc in skipped:
        print(f"skipped frame {token}: {exc}", file=sys.stderr)
    return 2 if skipped else 0


def cmd_eval(args) -> int:
    cfg = _build_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    instructions = benchmark.load_instructions(args.instructions)
    detections = benchmark.load_detections(args.detections)
    fid = None
    if args.features_a and args.features_b:
        fid = metrics.frechet_distance(
            metrics.load_features(args.features_a), metrics.load_features(args.features_b)
        )
    modes = (
        list(metrics.METRIC_MODES) if cfg.metric_mode == "both" else [cfg.metric_mode]
    )
    report_obj = {}
    texts = []
    for mode in modes:
        results = metrics.evaluate_instructions(
            instructions, detections, mode=mode, max_center_dist=cfg.max_center_dist
        )
        report = metrics.aggregate(results, fid=fid)
        report_obj[mode] = report.to_json()
        texts.append(f"[{mode}]\n{report.to_text()}")
    (out_dir / "report.json").write_text(json.dumps(report_obj, indent=2) + "\n")
    text = "\n\n".join(texts) + "\n"
    (out_dir / "report.txt").write_text(text)
    _echo_config(cfg, "eval", out_dir)
    print(text, end="")
    return 0


def cmd_fid(args) -> int:
    value = metrics.frechet_distance(
        metrics.load_features(args.features_a), metrics.load_features(args.features_b)
    )
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "fid.json").write_text(json.dumps({"fid": value}, indent=2) + "\n")
    print(f"{value:.6f}")
    return 0


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (CLI flags take precedence)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--z-near", dest="z_near", type=float, default=None)


def _add_filter_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--categories", default=None, help="comma-separated category names")
    p.add_argument("--min-side-px", dest="min_side_px", type=float, default=None)
    p.add_argument("--min-dist-m", dest="min_dist_m", type=float, default=None)
    p.add_argument("--max-dist-m", dest="max_dist_m", type=float, default=None)
    p.add_argument("--min-visibility", dest="min_visibility", type=int, default=None)


def _add_instance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--instances",
        default=None,
        help="comma-separated instance tokens (bypasses filtering)",
    )
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--size", type=_parse_size, default=None, help="render size WIDTHxHEIGHT")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="posebox",
        description="3D box conditioning maps, masks, crops and pose benchmark tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render conditioning maps per instance")
    _add_instance_flags(p)
    _add_config_flags(p)
    _add_filter_flags(p)
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--cropped", action="store_true", default=None)
    p.add_argument("--crop-factor", dest="crop_factor", type=float, default=None)
    p.add_argument("--out-edge", dest="out_edge", type=int, default=None)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("mask", help="write hull and occlusion-aware masks")
    _add_instance_flags(p)
    _add_config_flags(p)
    _add_filter_flags(p)
    p.add_argument("--occluder-masks", dest="occluder_masks", default=None)
    p.add_argument(
        "--occluder-min-pixels", dest="occluder_min_pixels", type=int, default=None
    )
    p.set_defaults(fn=cmd_mask)

    p = sub.add_parser("crop", help="cut square crops around instances")
    _add_instance_flags(p)
    _add_config_flags(p)
    _add_filter_flags(p)
    p.add_argument("--crop-factor", dest="crop_factor", type=float, default=None)
    p.add_argument("--out-edge", dest="out_edge", type=int, default=None)
    p.set_defaults(fn=cmd_crop)

    p = sub.add_parser("filter", help="apply benchmark filters to annotations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--detections", default=None)
    _add_config_flags(p)
    _add_filter_flags(p)
    p.add_argument("--max-yaw-error-deg", dest="max_yaw_error_deg", type=float, default=None)
    p.add_argument("--max-center-dist", dest="max_center_dist", type=float, default=None)
    p.set_defaults(fn=cmd_filter)

    p = sub.add_parser("place", help="sample placement instructions on drivable polygons")
    p.add_argument("--annotations", required=True)
    p.add_argument("--drivable", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_place)

    p = sub.add_parser("eval", help="score instructions against detections")
    p.add_argument("--instructions", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.add_argument(
        "--metric-mode",
        dest="metric_mode",
        choices=metrics.METRIC_MODES + ("both",),
        default=None,
    )
    p.add_argument("--max-center-dist", dest="max_center_dist", type=float, default=None)
    p.add_argument("--features-a", dest="features_a", default=None)
    p.add_argument("--features-b", dest="features_b", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("fid", help="Frechet distance between two feature files")
    p.add_argument("--features-a", dest="features_a", required=True)
    p.add_argument("--features-b", dest="features_b", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_fid)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PoseboxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
