"""Virtual infrared depth camera: rendering, unprojection, and depth-image IO.

Depth values are camera-frame z in millimeters at integer pixel coordinates
(pixel (u, v) means column u, row v; the principal point is a pixel index).
Zero encodes "no return". Two render paths exist:

* analytic scenes (lists of PlacedSurface): per-pixel rays are sphere-traced
  against the exact union distance field and polished with Newton steps, so
  every returned depth lies on a primitive surface to well below 1e-6 mm;
* point-cloud scenes: points are splatted into the z-buffer (nearest depth
  wins per pixel), which preserves occlusion but is quantized to the pixel
  grid.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import FrameId, FrameMismatchError, RigidTransform, TaggedPointCloud
from .surfaces import scene_surface_distance

_COARSE_EPS = 0.05      # mm; hand off from sphere tracing to Newton polish
_HIT_EPS = 1e-8         # mm; accepted surface distance after polish
_MAX_MARCH_STEPS = 512
_T_MAX = 20000.0        # mm; rays longer than this are misses


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @staticmethod
    def from_dict(d) -> "CameraIntrinsics":
        return CameraIntrinsics(
            d["fx"], d["fy"], d["cx"], d["cy"], int(d["width"]), int(d["height"])
        )


DEFAULT_INTRINSICS = CameraIntrinsics(fx=360.0, fy=360.0, cx=160.0, cy=144.0,
                                      width=320, height=288)

# Sensor sits 40 mm ahead of the HMD tracking origin, looking the same way.
DEFAULT_IR_EXTRINSIC = RigidTransform.from_translation(
    0.0, 0.0, -40.0, from_frame=FrameId.TECHNICIAN, to_frame=FrameId.IR_SENSOR
)


@dataclass(frozen=True)
class DepthImage:
    """Per-pixel depth in mm (0 = no return) plus the intrinsics that made it."""

    intrinsics: CameraIntrinsics
    depth: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        d = np.ascontiguousarray(np.asarray(self.depth, dtype=np.float64))
        if d.shape != (self.intrinsics.height, self.intrinsics.width):
            raise ValueError(
                f"depth shape {d.shape} does not match intrinsics "
                f"{(self.intrinsics.height, self.intrinsics.width)}"
            )
        if not np.all(np.isfinite(d)) or np.any(d < 0.0):
            raise ValueError("depth values must be finite and non-negative")
        d.setflags(write=False)
        object.__setattr__(self, "depth", d)


def _pixel_rays(intr: CameraIntrinsics) -> np.ndarray:
    """Unit ray directions in the sensor frame, one per pixel, row-major."""
    cols, rows = np.meshgrid(np.arange(intr.width), np.arange(intr.height))
    d = np.stack(
        [(cols - intr.cx) / intr.fx, (rows - intr.cy) / intr.fy, np.ones_like(cols, float)],
        axis=-1,
    ).reshape(-1, 3)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _march(placed, origins, dirs):
    """Sphere trace + per-primitive Newton polish; ray length t (nan = miss).

    Marching steps by the unsigned union distance, which is a valid lower
    bound on the hit distance from either side of any primitive. Once a ray
    is within _COARSE_EPS of some surface, it is polished against that
    primitive's *signed* field, whose transversal zero crossing keeps Newton
    well behaved (the unsigned field reflects at the root and chatters).
    """
    n = dirs.shape[0]
    t = np.zeros(n)
    active = np.ones(n, dtype=bool)
    near = np.zeros(n, dtype=bool)
    winner = np.zeros(n, dtype=int)
    for _ in range(_MAX_MARCH_STEPS):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        pts = origins[idx] + t[idx, None] * dirs[idx]
        d, win = scene_surface_distance(placed, pts, return_winner=True)
        got_near = d < _COARSE_EPS
        near[idx[got_near]] = True
        winner[idx[got_near]] = win[got_near]
        active[idx[got_near]] = False
        t[idx] += d
        active[idx[t[idx] > _T_MAX]] = False
    h = 1e-4
    for prim_index, prim in enumerate(placed):
        idx = np.flatnonzero(near & (winner == prim_index))
        if idx.size == 0:
            continue
        s = t[idx].copy()
        o, dd = origins[idx], dirs[idx]
        for _ in range(30):
            f = prim.sdf_world(o + s[:, None] * dd)
            if np.all(np.abs(f) < 1e-12):
                break
            fp = (prim.sdf_world(o + (s + h)[:, None] * dd) - f) / h
            step = np.where(np.abs(fp) > 1e-6, f / np.where(fp == 0.0, 1.0, fp), f)
            s = s - np.clip(step, -1.0, 1.0)
        f = prim.sdf_world(o + s[:, None] * dd)
        ok = (np.abs(f) < _HIT_EPS) & (s > 0.0)
        t[idx[~ok]] = np.nan
        t[idx[ok]] = s[ok]
    t[~near] = np.nan
    return t


def render_depth(
    scene,
    camera_pose: RigidTransform,
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
    noise_sigma: float = 0.0,
    seed: int = 0,
    timestamp: float = 0.0,
) -> DepthImage:
    """Render `scene` from a camera at `camera_pose` (world -> sensor).

    `scene` is either a list of PlacedSurface (exact ray cast) or a
    world-frame TaggedPointCloud (z-buffer splat). Gaussian depth noise of
    `noise_sigma` mm is applied to returning pixels, deterministic in `seed`.
    """
    if noise_sigma < 0.0:
        raise ValueError("noise_sigma must be >= 0")
    if camera_pose.from_frame is not None and camera_pose.from_frame is not FrameId.WORLD:
        raise FrameMismatchError(f"camera pose must map from WORLD, got {camera_pose.from_frame}")
    img = np.zeros((intrinsics.height, intrinsics.width))
    if isinstance(scene, TaggedPointCloud):
        if scene.frame is not FrameId.WORLD:
            raise FrameMismatchError(f"scene cloud must be WORLD, got {scene.frame}")
        if len(scene):
            pts = camera_pose.apply_points(scene.points)
            z = pts[:, 2]
            front = z > 1e-9
            pts, z = pts[front], z[front]
            u = np.rint(intrinsics.cx + intrinsics.fx * pts[:, 0] / z).astype(int)
            v = np.rint(intrinsics.cy + intrinsics.fy * pts[:, 1] / z).astype(int)
            ok = (u >= 0) & (u < intrinsics.width) & (v >= 0) & (v < intrinsics.height)
            buf = np.full(img.shape, np.inf)
            np.minimum.at(buf, (v[ok], u[ok]), z[ok])
            img = np.where(np.isinf(buf), 0.0, buf)
    elif scene:
        cam_to_world = camera_pose.invert()
        origin = np.asarray(cam_to_world.translation)
        dirs_world = _pixel_rays(intrinsics) @ cam_to_world.rotation_matrix().T
        t = _march(list(scene), np.broadcast_to(origin, dirs_world.shape), dirs_world)
        hits = np.isfinite(t)
        depth = np.zeros(t.shape)
        if hits.any():
            pts_world = origin + t[hits, None] * dirs_world[hits]
            depth[hits] = camera_pose.apply_points(pts_world)[:, 2]
        img = depth.reshape(intrinsics.height, intrinsics.width)
    if noise_sigma > 0.0:
        rng = np.random.default_rng(seed)
        noise = rng.normal(0.0, noise_sigma, img.shape)
        img = np.where(img > 0.0, np.maximum(img + noise, 0.0), 0.0)
    return DepthImage(intrinsics, img, timestamp)


def unproject_depth(img: DepthImage) -> TaggedPointCloud:
    """Lift a depth image to a sensor-frame cloud; zero-depth pixels drop out."""
    intr = img.intrinsics
    rows, cols = np.nonzero(img.depth > 0.0)
    d = img.depth[rows, cols]
    pts = np.stack(
        [(cols - intr.cx) * d / intr.fx, (rows - intr.cy) * d / intr.fy, d], axis=1
    )
    return TaggedPointCloud(FrameId.IR_SENSOR, pts, img.timestamp)


def sense_points(
    world_cloud: TaggedPointCloud,
    tracker_pose: RigidTransform,
    ir_extrinsic: RigidTransform = DEFAULT_IR_EXTRINSIC,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> TaggedPointCloud:
    """Direct point sensing: express a world cloud in the IR sensor frame.

    This is the noiseless shortcut around the full image pipeline
    (render_depth followed by unproject_depth); optional Gaussian noise on z
    mimics depth noise.
    """
    if world_cloud.frame is not FrameId.WORLD:
        raise FrameMismatchError(f"expected WORLD cloud, got {world_cloud.frame}")
    world_to_sensor = ir_extrinsic.compose(tracker_pose)
    sensed = world_cloud.transformed(
        world_to_sensor.retagged(FrameId.WORLD, FrameId.IR_SENSOR)
    )
    if noise_sigma <= 0.0:
        return sensed
    rng = np.random.default_rng(seed)
    pts = sensed.points.copy()
    pts[:, 2] += rng.normal(0.0, noise_sigma, len(sensed))
    return TaggedPointCloud(FrameId.IR_SENSOR, pts, sensed.timestamp)


# -- file format: 16-bit PGM in 0.1 mm steps + JSON sidecar -----------------

DEPTH_SCALE_MM = 0.1


def write_depth_image(img: DepthImage, path) -> None:
    """PGM (P5, maxval 65535, big-endian) in 0.1 mm units, plus `.json` sidecar."""
    path = Path(path)
    quant = np.clip(np.rint(img.depth / DEPTH_SCALE_MM), 0, 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.intrinsics.width} {img.intrinsics.height}\n65535\n".encode())
        fh.write(quant.tobytes())
    sidecar = {
        "intrinsics": img.intrinsics.to_dict(),
        "timestamp": img.timestamp,
        "depth_scale_mm": DEPTH_SCALE_MM,
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n"
    )


def read_depth_image(path) -> DepthImage:
    path = Path(path)
    blob = path.read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\n", blob)
    if not m:
        raise ValueError(f"{path}: not a binary PGM")
    width, height, maxval = (int(g) for g in m.groups())
    if maxval != 65535:
        raise ValueError(f"{path}: expected 16-bit PGM, maxval={maxval}")
    data = np.frombuffer(blob[m.end():], dtype=">u2")
    if data.size != width * height:
        raise ValueError(f"{path}: truncated pixel data")
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    intr = CameraIntrinsics.from_dict(sidecar["intrinsics"])
    depth = data.reshape(height, width).astype(np.float64) * sidecar["depth_scale_mm"]
    return DepthImage(intr, depth, sidecar["timestamp"])
