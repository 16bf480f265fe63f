"""End-to-end subcommand tests driving cli.main() on a synthetic dataset.

The dataset has two frames and five instances; under default filter
rules exactly car0, car1 and truck0 survive (far0 is beyond 40 m,
behind0 sits behind the camera).  car1 partially occludes car0.
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from posebox import benchmark, cli, conditioning, crops, masks, metrics, pngio
from posebox.benchmark import (
    DetectionRecord,
    DrivableRecord,
    EditInstruction,
    FrameRecord,
    InstanceRecord,
)
from posebox.geometry import Box3D
from posebox.masks import BinaryMask

from conftest import make_driving_camera

CAR0 = Box3D((10, 0, 0), (2, 4, 1.8), 0.0)
CAR1 = Box3D((6, 0.5, 0), (2, 4, 1.8), 0.0)
TRUCK0 = Box3D((12, -1, 0.2), (2.5, 6, 2.5), 0.3)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    cam = make_driving_camera()
    frames = [
        FrameRecord("f0", cam, "f0.png"),
        FrameRecord("f1", cam, "f1.png"),
    ]
    instances = [
        InstanceRecord("car0", "f0", "car", CAR0, 4),
        InstanceRecord("car1", "f0", "car", CAR1, 4),
        InstanceRecord("truck0", "f1", "truck", TRUCK0, 4),
        InstanceRecord("far0", "f0", "car", Box3D((45, 0, 0), (2, 4, 1.8), 0.0), 4),
        InstanceRecord("behind0", "f0", "car", Box3D((-10, 0, 0), (2, 4, 1.8), 0.0), 4),
    ]
    benchmark.save_annotations(frames, instances, root / "annotations.json")

    rng = np.random.default_rng(7)
    for name in ("f0.png", "f1.png"):
        pngio.save_rgb8(root / name, rng.uniform(0, 1, size=(512, 512, 3)))

    detections = {
        "f0": [DetectionRecord("f0", "car",
                               Box3D((10.3, 0.4, 0), (2, 4, 1.8), math.radians(1.0)),
                               0.9)],
        "f1": [DetectionRecord("f1", "truck",
                               Box3D((12, -1, 0.2), (2.5, 6, 2.5),
                                     0.3 + math.radians(5.0)), 0.8)],
    }
    benchmark.save_detections(detections, root / "detections.json")

    drivable = {
        "f0": DrivableRecord("f0", np.array([(5.0, -20.0), (45.0, -20.0),
                                             (45.0, 20.0), (5.0, 20.0)]), 0.0),
        "f1": DrivableRecord("f1", np.array([(5.0, -20.0), (45.0, -20.0),
                                             (45.0, 20.0), (5.0, 20.0)]), 0.5),
    }
    benchmark.save_drivable(drivable, root / "drivable.json")

    feats = np.random.default_rng(11).normal(size=(300, 16)).astype(np.float32)
    metrics.save_features(metrics.FeatureSet(feats), root / "a.feat")
    metrics.save_features(
        metrics.FeatureSet(feats + np.float32(0.5)), root / "b.feat"
    )
    return root


def read_tree(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


class TestRender:
    def test_default_run_renders_filtered_instances(self, dataset, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["render", "--annotations", str(dataset / "annotations.json"),
                         "--out", str(out), "--threads", "1"]) == 0
        names = {p.name for p in out.iterdir()}
        assert names == {
            "car0.png", "car0.meta.json", "car1.png", "car1.meta.json",
            "truck0.png", "truck0.meta.json", "config.json",
        }

    def test_pose_map_bytes_match_library(self, dataset, tmp_path):
        out = tmp_path / "out"
        cli.main(["render", "--annotations", str(dataset / "annotations.json"),
                  "--out", str(out), "--instances", "car0", "--threads", "1"])
        cam = make_driving_camera()
        cmap = conditioning.render_pose_map(cam, CAR0, (512, 512))
        np.testing.assert_array_equal(
            pngio.load_rgb8(out / "car0.png"), pngio.quantize_unit(cmap.data)
        )
        meta = json.loads((out / "car0.meta.json").read_text())
        assert meta["variant"] == "pose_map"
        assert meta["palette_hash"] == conditioning.palette_hash(conditioning.default_palette())

    def test_box_depth_is_16bit_millimetres(self, dataset, tmp_path):
        out = tmp_path / "out"
        cli.main(["render", "--annotations", str(dataset / "annotations.json"),
                  "--out", str(out), "--instances", "car0",
                  "--variant", "box_depth", "--threads", "1"])
        depth = pngio.load_depth16(out / "car0.png")
        cam = make_driving_camera()
        expect = conditioning.render_box_depthmap(cam, CAR0, (512, 512)).data[:, :, 0]
        np.testing.assert_array_equal(depth == 0.0, expect == 0.0)
        np.testing.assert_allclose(depth, expect, atol=5.01e-4)

    def test_six_channel_writes_cmap(self, dataset, tmp_path):
        out = tmp_path / "out"
        cli.main(["render", "--annotations", str(dataset / "annotations.json"),
                  "--out", str(out), "--instances", "car0",
                  "--variant", "six_channel", "--threads", "1"])
        cmap = conditioning.load_cmap(out / "car0.cmap")
        cam = make_driving_camera()
        expect = conditioning.render_six_channel(cam, CAR0, (512, 512))
        np.testing.assert_array_equal(cmap.data, expect.data)

    @pytest.mark.parametrize("variant,n", [("corners2d", 16), ("corners25d", 24)])
    def test_corner_variants_emit_values(self, dataset, tmp_path, variant, n):
        out = tmp_path / "out"
        cli.main(["render", "--annotations", str(dataset / "annotations.json"),
                  "--out", str(out), "--instances", "car0",
                  "--variant", variant, "--cropped", "--threads", "1"])
        meta = json.loads((out / "car0.meta.json").read_text())
        assert len(meta["values"]) == n
        assert meta["crop"] is None  # corner vectors have nothing to crop
        assert not (out / "car0.png").exists()

    def test_cropped_output_size_and_meta(self, dataset, tmp_path):
        out = tmp_path / "out"
        cli.main(["render", "--annotations", str(dataset / "annotations.json"),
                  "--out", str(out), "--instances", "car0",
                  "--cropped", "--out-edge", "128", "--threads", "1"])
        img = pngio.load_rgb8(out / "car0.png")
        assert img.shape == (128, 128, 3)
        meta = json.loads((out / "car0.meta.json").read_text())
        spec = crops.CropSpec.from_json(meta["crop"])
        assert spec.out_edge == 128

    def test_size_flag(self, dataset, tmp_path):
        out = tmp_path / "out"
        cli.main(["render", "--annotations", str(dataset / "annotations.json"),
                  "--out", str(out), "--instances", "car0",
                  "--size", "64x64", "--threads", "1"])
        assert pngio.load_rgb8(out / "car0.png").shape == (64, 64, 3)

    def test_unknown_instance_token_fails(self, dataset, tmp_path, capsys):
        code = cli.main(["render", "--annotations", str(dataset / "annotations.json"),
                         "--out", str(tmp_path / "out"), "--instances", "ghost",
                         "--threads", "1"])
        assert code == 1
        assert "unknown instance tokens" in capsys.readouterr().err

    def test_behind_camera_instance_is_skipped(self, dataset, tmp_path, capsys):
        out = tmp_path / "out"
        code = cli.main(["render", "--annotations", str(dataset / "annotations.json"),
                         "--out", str(out), "--instances", "car0,behind0",
                         "--threads", "1"])
        assert code == 2
        err = capsys.readouterr().err
        assert "skipped instance behind0" in err
        assert (out / "car0.png").exists()
        assert not (out / "behind0.png").exists()

    def test_config_echo_excludes_threads(self, dataset, tmp_path):
        out = tmp_path / "out"
        cli.main(["render", "--annotations", str(dataset / "annotations.json"),
                  "--out", str(out), "--instances", "car0", "--threads", "3"])
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["command"] == "render"
        assert cfg["variant"] == "pose_map"
        assert "threads" not in cfg

    def test_config_file_and_flag_precedence(self, dataset, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"variant": "six_channel", "out_edge": 64}))
        out_a = tmp_path / "a"
        cli.main(["render", "--annotations", str(dataset / "annotations.json"),
                  "--out", str(out_a), "--instances", "car0",
                  "--config", str(cfg_path), "--threads", "1"])
        assert (out_a / "car0.cmap").exists()
        out_b = tmp_path / "b"
        cli.main(["render", "--annotations", str(dataset / "annotations.json"),
                  "--out", str(out_b), "--instances", "car0",
                  "--config", str(cfg_path), "--variant", "pose_map", "--threads", "1"])
        assert (out_b / "car0.png").exists()
        assert json.loads((out_b / "config.json").read_text())["out_edge"] == 64

    def test_unknown_config_key_fails(self, dataset, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"variant": "pose_map", "bogus": 1}))
        code = cli.main(["render", "--annotations", str(dataset / "annotations.json"),
                         "--out", str(tmp_path / "out"), "--instances", "car0",
                         "--config", str(cfg_path), "--threads", "1"])
        assert code == 1
        assert "unknown config key" in capsys.readouterr().err

    def test_reruns_and_thread_counts_agree_bytewise(self, dataset, tmp_path):
        outs = [tmp_path / n for n in ("a", "b", "c")]
        for out, threads in zip(outs, ("1", "1", "4")):
            cli.main(["render", "--annotations", str(dataset / "annotations.json"),
                      "--out", str(out), "--threads", threads])
        a, b, c = (read_tree(o) for o in outs)
        assert a == b == c


class TestMask:
    def run(self, dataset, out, *extra):
        return cli.main(["mask", "--annotations", str(dataset / "annotations.json"),
                         "--out", str(out), "--threads", "1", *extra])

    def test_occluded_instance_mask(self, dataset, tmp_path, capsys):
        out = tmp_path / "out"
        assert self.run(dataset, out) == 0
        assert "car0: occluders = ['car1']" in capsys.readouterr().err
        cam = make_driving_camera()
        hull = masks.hull_mask(cam, CAR0, (512, 512))
        np.testing.assert_array_equal(
            BinaryMask.load_png(out / "car0.hull.png").data, hull.data
        )
        occ = masks.hull_mask(cam, CAR1, (512, 512))
        np.testing.assert_array_equal(
            BinaryMask.load_png(out / "car0.mask.png").data, hull.data & ~occ.data
        )

    def test_unoccluded_mask_equals_hull(self, dataset, tmp_path):
        out = tmp_path / "out"
        self.run(dataset, out)
        hull = BinaryMask.load_png(out / "car1.hull.png").data
        mask = BinaryMask.load_png(out / "car1.mask.png").data
        np.testing.assert_array_equal(mask, hull)

    def test_external_occluder_masks_are_used(self, dataset, tmp_path):
        occ_dir = tmp_path / "occ"
        occ_dir.mkdir()
        custom = np.zeros((512, 512), dtype=bool)
        custom[:, :256] = True
        BinaryMask(custom).save_png(occ_dir / "car1.png")
        out = tmp_path / "out"
        assert self.run(dataset, out, "--occluder-masks", str(occ_dir)) == 0
        cam = make_driving_camera()
        hull = masks.hull_mask(cam, CAR0, (512, 512))
        np.testing.assert_array_equal(
            BinaryMask.load_png(out / "car0.mask.png").data, hull.data & ~custom
        )

    def test_missing_occluder_mask_degrades_to_hull(self, dataset, tmp_path, capsys):
        occ_dir = tmp_path / "occ"
        occ_dir.mkdir()  # deliberately empty
        out = tmp_path / "out"
        assert self.run(dataset, out, "--occluder-masks", str(occ_dir)) == 2
        assert "occluder masks missing" in capsys.readouterr().err
        hull = BinaryMask.load_png(out / "car0.hull.png").data
        mask = BinaryMask.load_png(out / "car0.mask.png").data
        np.testing.assert_array_equal(mask, hull)


class TestCrop:
    def test_crop_matches_library(self, dataset, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["crop", "--annotations", str(dataset / "annotations.json"),
                         "--out", str(out), "--instances", "car0",
                         "--out-edge", "256", "--threads", "1"]) == 0
        cam = make_driving_camera()
        image = pngio.load_rgb8(dataset / "f0.png")
        rect = crops.bbox2d_of(cam, CAR0)
        spec = crops.square_crop_spec(rect, (512, 512), out_edge=256)
        assert crops.load_crop_spec(out / "car0.json") == spec
        np.testing.assert_array_equal(
            pngio.load_rgb8(out / "car0.png"), crops.apply_crop(image, spec)
        )

    def test_missing_frame_image_is_skipped(self, dataset, tmp_path, capsys):
        ann = json.loads((dataset / "annotations.json").read_text())
        ann["frames"][0]["image_path"] = "void.png"
        broken = tmp_path / "broken.json"
        broken.write_text(json.dumps(ann))
        out = tmp_path / "out"
        code = cli.main(["crop", "--annotations", str(broken),
                         "--out", str(out), "--instances", "car0", "--threads", "1"])
        assert code == 2
        assert "skipped instance car0" in capsys.readouterr().err


class TestFilter:
    def test_default_rules(self, dataset, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli.main(["filter", "--annotations", str(dataset / "annotations.json"),
                         "--out", str(out)]) == 0
        assert "kept 3 of 5 instances" in capsys.readouterr().out
        _, kept = benchmark.load_annotations(out / "annotations.json")
        assert [i.instance_token for i in kept] == ["car0", "car1", "truck0"]

    def test_detector_check(self, dataset, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli.main(["filter", "--annotations", str(dataset / "annotations.json"),
                         "--out", str(out),
                         "--detections", str(dataset / "detections.json")]) == 0
        assert "kept 1 of 5 instances" in capsys.readouterr().out
        _, kept = benchmark.load_annotations(out / "annotations.json")
        assert [i.instance_token for i in kept] == ["car0"]

    def test_flag_overrides_rules(self, dataset, tmp_path):
        out = tmp_path / "out"
        cli.main(["filter", "--annotations", str(dataset / "annotations.json"),
                  "--out", str(out), "--categories", "truck"])
        _, kept = benchmark.load_annotations(out / "annotations.json")
        assert [i.instance_token for i in kept] == ["truck0"]


class TestPlace:
    def test_counts_and_determinism(self, dataset, tmp_path, capsys):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert cli.main(["place", "--annotations", str(dataset / "annotations.json"),
                             "--drivable", str(dataset / "drivable.json"),
                             "--out", str(out), "--seed", "3"]) == 0
        assert "wrote 48 placement instructions" in capsys.readouterr().out
        assert (out_a / "instructions.json").read_bytes() == (out_b / "instructions.json").read_bytes()
        out_c = tmp_path / "c"
        cli.main(["place", "--annotations", str(dataset / "annotations.json"),
                  "--drivable", str(dataset / "drivable.json"),
                  "--out", str(out_c), "--seed", "4"])
        assert (out_a / "instructions.json").read_bytes() != (out_c / "instructions.json").read_bytes()

    def test_degenerate_frame_skipped(self, dataset, tmp_path, capsys):
        drv = json.loads((dataset / "drivable.json").read_text())
        drv["f1"]["polygon"] = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]
        broken = tmp_path / "drv.json"
        broken.write_text(json.dumps(drv))
        out = tmp_path / "out"
        code = cli.main(["place", "--annotations", str(dataset / "annotations.json"),
                         "--drivable", str(broken), "--out", str(out)])
        assert code == 2
        assert "skipped frame f1" in capsys.readouterr().err
        instrs = benchmark.load_instructions(out / "instructions.json")
        assert len(instrs) == 24
        assert {i.frame_token for i in instrs} == {"f0"}


class TestEval:
    def perfect_fixture(self, tmp_path):
        instrs = [
            EditInstruction("replace", "f0", "car0", "car", CAR0),
            EditInstruction("replace", "f0", "car1", "car", CAR1),
            EditInstruction("replace", "f1", "truck0", "truck", TRUCK0),
        ]
        dets = {
            "f0": [DetectionRecord("f0", "car", CAR0, 0.9),
                   DetectionRecord("f0", "car", CAR1, 0.9)],
            "f1": [DetectionRecord("f1", "truck", TRUCK0, 0.9)],
        }
        benchmark.save_instructions(instrs, tmp_path / "instr.json")
        benchmark.save_detections(dets, tmp_path / "dets.json")
        return tmp_path / "instr.json", tmp_path / "dets.json"

    def test_oracle_perfect_detections_score_zero(self, tmp_path, capsys):
        instr, dets = self.perfect_fixture(tmp_path)
        out = tmp_path / "out"
        assert cli.main(["eval", "--instructions", str(instr),
                         "--detections", str(dets), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())["ground_plane"]
        assert report["mean_ate"] == 0.0
        assert report["mean_aoe"] == 0.0
        assert report["flip_rate"] == 0.0
        assert report["match_rate"] == 1.0
        assert "mATE" in (out / "report.txt").read_text()

    def test_both_modes(self, tmp_path):
        instr, dets = self.perfect_fixture(tmp_path)
        out = tmp_path / "out"
        cli.main(["eval", "--instructions", str(instr), "--detections", str(dets),
                  "--out", str(out), "--metric-mode", "both"])
        report = json.loads((out / "report.json").read_text())
        assert set(report) == {"ground_plane", "full_3d"}

    def test_no_detections_scores_nothing(self, tmp_path):
        instr, _ = self.perfect_fixture(tmp_path)
        benchmark.save_detections({}, tmp_path / "empty.json")
        out = tmp_path / "out"
        assert cli.main(["eval", "--instructions", str(instr),
                         "--detections", str(tmp_path / "empty.json"),
                         "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())["ground_plane"]
        assert report["match_rate"] == 0.0
        assert report["mean_ate"] is None

    def test_fid_included_when_features_given(self, dataset, tmp_path):
        instr, dets = self.perfect_fixture(tmp_path)
        out = tmp_path / "out"
        cli.main(["eval", "--instructions", str(instr), "--detections", str(dets),
                  "--out", str(out),
                  "--features-a", str(dataset / "a.feat"),
                  "--features-b", str(dataset / "b.feat")])
        report = json.loads((out / "report.json").read_text())["ground_plane"]
        expect = metrics.frechet_distance(
            metrics.load_features(dataset / "a.feat"),
            metrics.load_features(dataset / "b.feat"),
        )
        assert report["fid"] == pytest.approx(expect)
        assert "fid:" in (out / "report.txt").read_text()


class TestFid:
    def test_identical_sets_print_zero(self, dataset, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli.main(["fid", "--features-a", str(dataset / "a.feat"),
                         "--features-b", str(dataset / "a.feat"),
                         "--out", str(out)]) == 0
        assert float(capsys.readouterr().out.strip()) == pytest.approx(0.0, abs=1e-8)
        assert json.loads((out / "fid.json").read_text())["fid"] == pytest.approx(0.0, abs=1e-8)

    def test_matches_library_value(self, dataset, capsys):
        assert cli.main(["fid", "--features-a", str(dataset / "a.feat"),
                         "--features-b", str(dataset / "b.feat")]) == 0
        printed = float(capsys.readouterr().out.strip())
        expect = metrics.frechet_distance(
            metrics.load_features(dataset / "a.feat"),
            metrics.load_features(dataset / "b.feat"),
        )
        assert printed == pytest.approx(expect, abs=1e-6)
