"""Save/show chain correctness and registry persistence."""

import numpy as np
import pytest

from carmguide.carm import CArmDofs, CArmGeometry, sample_surface
from carmguide.depth import sense_points
from carmguide.geometry import FrameId, FrameMismatchError, RigidTransform, TaggedPointCloud
from carmguide.registry import (
    RegistryIOError,
    UnknownViewError,
    ViewRegistry,
    load,
    persist,
    save_view,
    show_view,
)
from conftest import random_transform

WORLD_TO_TECH = (FrameId.WORLD, FrameId.TECHNICIAN)
TECH_TO_IR = (FrameId.TECHNICIAN, FrameId.IR_SENSOR)


def sensor_cloud(points):
    return TaggedPointCloud(FrameId.IR_SENSOR, points)


def tech_pose(t: RigidTransform) -> RigidTransform:
    return t.retagged(*WORLD_TO_TECH)


def extrinsic(t: RigidTransform) -> RigidTransform:
    return t.retagged(*TECH_TO_IR)


IDENT_POSE = tech_pose(RigidTransform.identity())
IDENT_EXT = extrinsic(RigidTransform.identity())


class TestSaveView:
    def test_identity_chain_keeps_points(self, rng):
        pts = rng.uniform(-500, 500, (40, 3))
        view = save_view("v", sensor_cloud(pts), IDENT_POSE, IDENT_EXT, t0=1.0)
        np.testing.assert_array_equal(view.world_cloud.points, pts)
        assert view.world_cloud.frame is FrameId.WORLD
        assert view.t0 == 1.0

    def test_matrix_chain_oracle(self):
        # world point = inv(extrinsic o tracker) applied to the sensor point,
        # checked against an explicit numpy 4x4 chain.
        tracker = tech_pose(RigidTransform.from_translation(0, 0, 500))
        view = save_view(
            "v", sensor_cloud([[0.0, 0.0, 1000.0]]), tracker, IDENT_EXT, t0=0.0
        )
        chain = np.linalg.inv(np.eye(4) @ tracker.matrix())
        expected = (chain @ [0.0, 0.0, 1000.0, 1.0])[:3]
        np.testing.assert_allclose(view.world_cloud.points[0], expected, atol=1e-12)
        np.testing.assert_allclose(expected, [0.0, 0.0, 500.0], atol=1e-12)

    def test_full_chain_oracle_random(self, rng):
        for _ in range(25):
            tracker = tech_pose(random_transform(rng))
            ext = extrinsic(random_transform(rng, 30.0, 100.0))
            pts = rng.uniform(-500, 500, (10, 3))
            view = save_view("v", sensor_cloud(pts), tracker, ext, t0=0.0)
            chain = np.linalg.inv(ext.matrix() @ tracker.matrix())
            hom = np.concatenate([pts, np.ones((10, 1))], axis=1)
            expected = (chain @ hom.T).T[:, :3]
            np.testing.assert_allclose(view.world_cloud.points, expected, atol=1e-9)

    def test_empty_cloud_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            save_view("v", sensor_cloud(np.empty((0, 3))), IDENT_POSE, IDENT_EXT, 0.0)

    def test_wrong_frame_rejected(self, rng):
        cloud = TaggedPointCloud(FrameId.WORLD, rng.uniform(size=(5, 3)))
        with pytest.raises(FrameMismatchError):
            save_view("v", cloud, IDENT_POSE, IDENT_EXT, 0.0)


class TestShowView:
    def test_round_trip_at_save_pose_identity_extrinsic(self, rng):
        pts = rng.uniform(-500, 500, (30, 3))
        tracker = tech_pose(random_transform(rng))
        view = save_view("v", sensor_cloud(pts), tracker, IDENT_EXT, t0=0.0)
        shown = show_view(view, tracker)
        np.testing.assert_allclose(shown.points, pts, atol=1e-9)
        assert shown.frame is FrameId.TECHNICIAN

    def test_round_trip_through_extrinsic(self, rng):
        pts = rng.uniform(-500, 500, (30, 3))
        tracker = tech_pose(random_transform(rng))
        ext = extrinsic(random_transform(rng, 20.0, 80.0))
        view = save_view("v", sensor_cloud(pts), tracker, ext, t0=0.0)
        shown = show_view(view, tracker)
        # Shown cloud composed with the extrinsic reproduces the sensor cloud.
        back = ext.apply_points(shown.points)
        np.testing.assert_allclose(back, pts, atol=1e-9)

    def test_technician_motion_two_pose_oracle(self, rng):
        # Operator moves by T_rel in their own frame: the shown cloud must
        # transform by invert(T_rel).
        pts = rng.uniform(-500, 500, (30, 3))
        tracker1 = tech_pose(random_transform(rng))
        view = save_view("v", sensor_cloud(pts), tracker1, IDENT_EXT, t0=0.0)
        shown1 = show_view(view, tracker1)
        t_rel = random_transform(rng, 45.0, 300.0)
        tracker2 = tech_pose(t_rel.invert().compose(tracker1.retagged(None, None)))
        shown2 = show_view(view, tracker2)
        np.testing.assert_allclose(
            shown2.points, t_rel.invert().apply_points(shown1.points), atol=1e-9
        )

    def test_unknown_name(self):
        reg = ViewRegistry()
        with pytest.raises(UnknownViewError):
            reg.show("nope", IDENT_POSE)

    def test_world_data_unchanged_by_show(self, rng):
        pts = rng.uniform(-500, 500, (10, 3))
        view = save_view("v", sensor_cloud(pts), IDENT_POSE, IDENT_EXT, t0=0.0)
        before = view.world_cloud.points.copy()
        show_view(view, tech_pose(random_transform(rng)))
        np.testing.assert_array_equal(view.world_cloud.points, before)


class TestWorldFrameInvariance:
    def test_same_scene_from_ten_hmd_poses(self, rng):
        # Noiseless sensing of a fixed device from random headset poses must
        # store the same world cloud regardless of where the operator stood.
        geom = CArmGeometry()
        world = sample_surface(CArmDofs(orbital=30.0), geom, 500.0, seed=6)
        ext = extrinsic(RigidTransform.from_translation(0, 0, -40))
        reference = None
        for _ in range(10):
            tracker = tech_pose(random_transform(rng, 60.0, 1500.0))
            sensed = sense_points(world, tracker, ext)
            view = save_view("v", sensed, tracker, ext, t0=0.0)
            if reference is None:
                reference = view.world_cloud.points
            else:
                err = np.abs(view.world_cloud.points - reference).max()
                assert err < 1e-6


class TestRegistry:
    def test_replace_on_duplicate_warns(self, rng, caplog):
        reg = ViewRegistry()
        v1 = save_view("pos", sensor_cloud(rng.uniform(size=(5, 3))), IDENT_POSE, IDENT_EXT, 0.0)
        v2 = save_view("pos", sensor_cloud(rng.uniform(size=(7, 3))), IDENT_POSE, IDENT_EXT, 1.0)
        reg = reg.add(v1)
        with caplog.at_level("WARNING"):
            reg = reg.add(v2)
        assert "replacing" in caplog.text
        assert len(reg) == 1
        assert len(reg.get("pos").world_cloud) == 7

    def test_ordered_names(self, rng):
        reg = ViewRegistry()
        for name in ("b", "a", "c"):
            reg = reg.add(
                save_view(name, sensor_cloud(rng.uniform(size=(3, 3))), IDENT_POSE, IDENT_EXT, 0.0)
            )
        assert reg.names() == ["b", "a", "c"]


class TestPersistence:
    def build_registry(self, rng, n=3):
        reg = ViewRegistry()
        for i in range(n):
            view = save_view(
                f"Position {i + 1}",
                sensor_cloud(rng.uniform(-1000, 1000, (50 + i, 3))),
                tech_pose(random_transform(rng)),
                extrinsic(random_transform(rng, 10.0, 50.0)),
                t0=float(i),
                reference_keypoints={"kp1": (10.0 + i, 20.0)},
            )
            reg = reg.add(view)
        return reg

    def test_empty_registry_round_trip(self, tmp_path):
        persist(ViewRegistry(), tmp_path / "reg")
        back = load(tmp_path / "reg")
        assert len(back) == 0

    def test_round_trip_values(self, tmp_path, rng):
        reg = self.build_registry(rng)
        persist(reg, tmp_path / "reg")
        back = load(tmp_path / "reg")
        assert back.names() == reg.names()
        for a, b in zip(reg.views, back.views):
            assert a.t0 == b.t0
            assert a.tracker_pose == b.tracker_pose  # bit-exact quaternions
            assert a.ir_extrinsic == b.ir_extrinsic
            assert a.reference_keypoints == b.reference_keypoints
            np.testing.assert_allclose(
                a.world_cloud.points, b.world_cloud.points, atol=1e-3
            )

    def test_persist_load_persist_byte_identical(self, tmp_path, rng):
        reg = self.build_registry(rng)
        persist(reg, tmp_path / "a")
        persist(load(tmp_path / "a"), tmp_path / "b")
        files_a = sorted(p.name for p in (tmp_path / "a").iterdir())
        files_b = sorted(p.name for p in (tmp_path / "b").iterdir())
        assert files_a == files_b
        for name in files_a:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_truncated_ply_names_view(self, tmp_path, rng):
        reg = self.build_registry(rng, n=1)
        persist(reg, tmp_path / "reg")
        ply = tmp_path / "reg" / "view_000.ply"
        ply.write_bytes(ply.read_bytes()[:-5])
        with pytest.raises(RegistryIOError, match="Position 1"):
            load(tmp_path / "reg")

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(RegistryIOError, match="manifest"):
            load(tmp_path)

    def test_point_count_mismatch(self, tmp_path, rng):
        import json

        reg = self.build_registry(rng, n=1)
        persist(reg, tmp_path / "reg")
        manifest = json.loads((tmp_path / "reg" / "manifest.json").read_text())
        manifest["views"][0]["point_count"] += 1
        (tmp_path / "reg" / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(RegistryIOError, match="points"):
            load(tmp_path / "reg")
