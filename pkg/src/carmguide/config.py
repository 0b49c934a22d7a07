"""Session configuration: device geometry, sensors, ICP, presets, banding.

Everything has a working default; a JSON config file (or the CARMGUIDE_CONFIG
environment variable pointing at one) overrides fields selectively. Banding
thresholds drive the UI's green/amber/red alignment indicator and are display
conventions only, not clinical acceptance limits.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .carm import CArmDofs, CArmGeometry, DEFAULT_PRESETS, Keypoint3D
from .depth import DEFAULT_INTRINSICS, DEFAULT_IR_EXTRINSIC, CameraIntrinsics
from .geometry import FrameId, RigidTransform
from .icp import IcpParams

CONFIG_ENV_VAR = "CARMGUIDE_CONFIG"

DEFAULT_KEYPOINTS = (
    Keypoint3D("kp1", (60.0, 40.0, 30.0)),
    Keypoint3D("kp2", (-50.0, 45.0, -25.0)),
    Keypoint3D("kp3", (-40.0, -55.0, 20.0)),
    Keypoint3D("kp4", (55.0, -45.0, -30.0)),
)

# Operator standing 2 m back on -y, camera +z looking at the device.
DEFAULT_TRACKER_POSE = RigidTransform.from_matrix(
    [[1.0, 0.0, 0.0, 0.0],
     [0.0, 0.0, -1.0, 0.0],
     [0.0, 1.0, 0.0, 2000.0],
     [0.0, 0.0, 0.0, 1.0]],
    from_frame=FrameId.WORLD,
    to_frame=FrameId.TECHNICIAN,
)


@dataclass(frozen=True)
class BandingThresholds:
    """Green below `good`, amber below `warn`, red above (mm, degrees)."""

    good_mm: float = 5.0
    good_deg: float = 1.0
    warn_mm: float = 20.0
    warn_deg: float = 3.0

    def classify(self, distance_mm: float, angle_deg: float) -> str:
        if distance_mm <= self.good_mm and angle_deg <= self.good_deg:
            return "green"
        if distance_mm <= self.warn_mm and angle_deg <= self.warn_deg:
            return "amber"
        return "red"


@dataclass(frozen=True)
class SessionConfig:
    geometry: CArmGeometry = CArmGeometry()
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS
    ir_extrinsic: RigidTransform = DEFAULT_IR_EXTRINSIC
    icp: IcpParams = IcpParams()
    presets: dict[str, CArmDofs] = field(default_factory=lambda: dict(DEFAULT_PRESETS))
    keypoints: tuple[Keypoint3D, ...] = DEFAULT_KEYPOINTS
    sample_density_per_m2: float = 2000.0
    seed: int = 7
    banding: BandingThresholds = BandingThresholds()
    snapshot_max_points: int = 20000
    initial_tracker_pose: RigidTransform = DEFAULT_TRACKER_POSE


def default_config() -> SessionConfig:
    return SessionConfig()


def _pose_from_json(d, from_frame, to_frame) -> RigidTransform:
    if "matrix" in d:
        return RigidTransform.from_matrix(d["matrix"], from_frame, to_frame)
    return RigidTransform(
        tuple(d["quaternion"]), tuple(d["translation"]), from_frame, to_frame
    )


def load_config(path=None) -> SessionConfig:
    """Build a config from JSON at `path`, the env override, or defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        return default_config()
    raw = json.loads(Path(path).read_text())
    base = default_config()
    kwargs = {}
    if "geometry" in raw:
        g = raw["geometry"]
        if "detector_pixels" in g:
            g["detector_pixels"] = tuple(g["detector_pixels"])
        if "arc_span_deg" in g:
            g["arc_span_deg"] = tuple(g["arc_span_deg"])
        if "base_size" in g:
            g["base_size"] = tuple(g["base_size"])
        kwargs["geometry"] = dataclasses.replace(base.geometry, **g)
    if "intrinsics" in raw:
        kwargs["intrinsics"] = CameraIntrinsics.from_dict(
            {**base.intrinsics.to_dict(), **raw["intrinsics"]}
        )
    if "ir_extrinsic" in raw:
        kwargs["ir_extrinsic"] = _pose_from_json(
            raw["ir_extrinsic"], FrameId.TECHNICIAN, FrameId.IR_SENSOR
        )
    if "icp" in raw:
        kwargs["icp"] = dataclasses.replace(base.icp, **raw["icp"])
    if "presets" in raw:
        presets = dict(base.presets)
        for name, dofs in raw["presets"].items():
            presets[name] = CArmDofs(**dofs)
        kwargs["presets"] = presets
    if "keypoints" in raw:
        kwargs["keypoints"] = tuple(
            Keypoint3D(k["id"], tuple(k["position"])) for k in raw["keypoints"]
        )
    if "sample_density_per_m2" in raw:
        kwargs["sample_density_per_m2"] = float(raw["sample_density_per_m2"])
    if "seed" in raw:
        kwargs["seed"] = int(raw["seed"])
    if "banding" in raw:
        kwargs["banding"] = BandingThresholds(**raw["banding"])
    if "snapshot_max_points" in raw:
        kwargs["snapshot_max_points"] = int(raw["snapshot_max_points"])
    if "initial_tracker_pose" in raw:
        kwargs["initial_tracker_pose"] = _pose_from_json(
            raw["initial_tracker_pose"], FrameId.WORLD, FrameId.TECHNICIAN
        )
    return dataclasses.replace(base, **kwargs)
