"""Named world-frame snapshots of the device and their re-display.

Saving maps a sensor-frame cloud through the headset chain
(sensor -> technician -> world) and stores the world-frame result immutably,
together with the tracker pose that was current at save time. Showing maps
the stored world cloud into the technician frame that is current *now*, so
the cloud reappears where the device stood, not where the operator stands.

Persistence is one JSON manifest plus one binary PLY per view. The manifest
carries the pose both as a 4x4 matrix (interchange form) and as
quaternion+translation; the latter is what load() reads back, which keeps
poses bit-exact and repeated persist() calls byte-identical.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .geometry import (
    FrameId,
    FrameMismatchError,
    RigidTransform,
    TaggedPointCloud,
    transform_to_json,
)
from .ply import PlyError, read_ply, write_ply

log = logging.getLogger(__name__)


class RegistryError(Exception):
    pass


class UnknownViewError(RegistryError, KeyError):
    """Lookup of a view name that was never saved."""

    def __str__(self) -> str:  # KeyError would repr-quote the message
        return self.args[0] if self.args else ""


class RegistryIOError(RegistryError):
    """Persistence failure; the message names the offending file or view."""


@dataclass(frozen=True)
class SavedView:
    """One named snapshot: world cloud plus the save-time headset chain."""

    name: str
    t0: float
    world_cloud: TaggedPointCloud
    tracker_pose: RigidTransform          # WORLD -> TECHNICIAN at t0
    ir_extrinsic: RigidTransform          # TECHNICIAN -> IR_SENSOR
    reference_keypoints: dict[str, tuple[float, float]] | None = None

    def __post_init__(self):
        if not self.name:
            raise ValueError("view name must be non-empty")
        if self.world_cloud.frame is not FrameId.WORLD:
            raise FrameMismatchError(
                f"saved cloud must be WORLD, got {self.world_cloud.frame}"
            )
        if len(self.world_cloud) < 1:
            raise ValueError("saved cloud must contain at least one point")

    @property
    def world_from_sensor(self) -> RigidTransform:
        return self.ir_extrinsic.compose(self.tracker_pose).invert()


def save_view(
    name: str,
    sensor_cloud: TaggedPointCloud,
    tracker_pose: RigidTransform,
    ir_extrinsic: RigidTransform,
    t0: float,
    reference_keypoints=None,
) -> SavedView:
    """Map a sensor-frame cloud to the world frame and freeze it under `name`."""
    if len(sensor_cloud) == 0:
        raise ValueError(f"cannot save view {name!r} from an empty cloud")
    if sensor_cloud.frame is not FrameId.IR_SENSOR:
        raise FrameMismatchError(
            f"save_view expects an IR_SENSOR cloud, got {sensor_cloud.frame}"
        )
    world_from_sensor = (
        ir_extrinsic.compose(tracker_pose)
        .invert()
        .retagged(FrameId.IR_SENSOR, FrameId.WORLD)
    )
    world_cloud = sensor_cloud.transformed(world_from_sensor, timestamp=t0)
    return SavedView(
        name=name,
        t0=float(t0),
        world_cloud=world_cloud,
        tracker_pose=tracker_pose.retagged(FrameId.WORLD, FrameId.TECHNICIAN),
        ir_extrinsic=ir_extrinsic.retagged(FrameId.TECHNICIAN, FrameId.IR_SENSOR),
        reference_keypoints=dict(reference_keypoints) if reference_keypoints else None,
    )


def show_view(
    view: SavedView, current_tracker_pose: RigidTransform
) -> TaggedPointCloud:
    """Express the stored world cloud in the current technician frame."""
    return view.world_cloud.transformed(
        current_tracker_pose.retagged(FrameId.WORLD, FrameId.TECHNICIAN)
    )


@dataclass(frozen=True)
class ViewRegistry:
    """Ordered, immutable name -> SavedView map; updates return new registries."""

    views: tuple[SavedView, ...] = ()

    def __len__(self) -> int:
        return len(self.views)

    def __contains__(self, name: str) -> bool:
        return any(v.name == name for v in self.views)

    def names(self) -> list[str]:
        return [v.name for v in self.views]

    def get(self, name: str) -> SavedView:
        for v in self.views:
            if v.name == name:
                return v
        raise UnknownViewError(f"no saved view named {name!r}")

    def add(self, view: SavedView) -> "ViewRegistry":
        """Insert a view; an existing name is replaced in place with a warning."""
        if view.name in self:
            log.warning("replacing saved view %r", view.name)
            return ViewRegistry(
                tuple(view if v.name == view.name else v for v in self.views)
            )
        return ViewRegistry(self.views + (view,))

    def show(self, name: str, current_tracker_pose: RigidTransform) -> TaggedPointCloud:
        return show_view(self.get(name), current_tracker_pose)


# -- persistence -------------------------------------------------------------


def _pose_to_json(t: RigidTransform) -> dict:
    return {"quaternion": list(t.rotation), "translation": list(t.translation)}


def _pose_from_json(d, from_frame, to_frame) -> RigidTransform:
    return RigidTransform(
        tuple(d["quaternion"]), tuple(d["translation"]), from_frame, to_frame
    )


def persist(registry: ViewRegistry, path) -> None:
    """Write the registry into directory `path` (manifest.json + one PLY each)."""
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)
        entries = []
        for i, view in enumerate(registry.views):
            cloud_file = f"view_{i:03d}.ply"
            write_ply(root / cloud_file, view.world_cloud.points)
            entries.append(
                {
                    "name": view.name,
                    "t0": view.t0,
                    "cloud_file": cloud_file,
                    "point_count": len(view.world_cloud),
                    "world_from_sensor": transform_to_json(view.world_from_sensor),
                    "tracker_pose": _pose_to_json(view.tracker_pose),
                    "ir_extrinsic": _pose_to_json(view.ir_extrinsic),
                    "reference_keypoints": view.reference_keypoints,
                }
            )
        manifest = {"format": "carmguide-views/1", "views": entries}
        (root / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n"
        )
    except OSError as exc:
        raise RegistryIOError(f"cannot persist registry to {root}: {exc}") from exc


def load(path) -> ViewRegistry:
    """Read a registry persisted by persist(); poses come back bit-exact."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text())
    except OSError as exc:
        raise RegistryIOError(f"cannot read {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise RegistryIOError(f"malformed manifest {manifest_path}: {exc}") from exc
    if manifest.get("format") != "carmguide-views/1":
        raise RegistryIOError(
            f"{manifest_path}: unknown format {manifest.get('format')!r}"
        )
    views = []
    for entry in manifest["views"]:
        name = entry.get("name", "<unnamed>")
        try:
            points = read_ply(root / entry["cloud_file"])
        except (OSError, PlyError) as exc:
            raise RegistryIOError(f"view {name!r}: {exc}") from exc
        if points.shape[0] != entry["point_count"]:
            raise RegistryIOError(
                f"view {name!r}: manifest says {entry['point_count']} points,"
                f" file has {points.shape[0]}"
            )
        kp = entry.get("reference_keypoints")
        views.append(
            SavedView(
                name=name,
                t0=float(entry["t0"]),
                world_cloud=TaggedPointCloud(FrameId.WORLD, points, entry["t0"]),
                tracker_pose=_pose_from_json(
                    entry["tracker_pose"], FrameId.WORLD, FrameId.TECHNICIAN
                ),
                ir_extrinsic=_pose_from_json(
                    entry["ir_extrinsic"], FrameId.TECHNICIAN, FrameId.IR_SENSOR
                ),
                reference_keypoints=(
                    {k: tuple(v) for k, v in kp.items()} if kp else None
                ),
            )
        )
    return ViewRegistry(tuple(views))
