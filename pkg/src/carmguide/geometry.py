"""Rigid transforms, coordinate frames, and the pose-difference metric.

Rotations are stored as unit quaternions (w, x, y, z) and renormalized after
every construction and composition, so chains of hundreds of transforms stay
within 1e-9 of the unit sphere. Translations are in millimeters. Transforms
optionally carry (from_frame, to_frame) endpoints; when both sides of an
operation declare endpoints, mismatches are hard errors.

Scalar quaternion arithmetic deliberately uses plain Python floats: the
guidance loop composes single transforms at high rate and tuple math beats
small-array numpy by an order of magnitude. Batch point transforms go through
the 3x3 rotation matrix and numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class FrameId(Enum):
    """Coordinate frames of the guidance scene."""

    WORLD = "world"
    TECHNICIAN = "technician"
    IR_SENSOR = "ir_sensor"
    CARM = "carm"
    DETECTOR = "detector"
    DISPLAY = "display"


class FrameMismatchError(ValueError):
    """A transform or cloud was used across incompatible frames."""


_QUAT_NORM_TOL = 1e-9


def _qmul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def _qrotate(q, v):
    # v' = v + 2w(u x v) + 2(u x (u x v)), u = vector part of q
    w, x, y, z = q
    vx, vy, vz = v
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return (
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    )


@dataclass(frozen=True)
class RigidTransform:
    """An SE(3) pose: unit quaternion (w, x, y, z) plus translation in mm.

    `from_frame`/`to_frame` are optional endpoint tags. An untyped transform
    (both None) participates in any algebra; a typed one is checked.
    """

    rotation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    from_frame: FrameId | None = None
    to_frame: FrameId | None = None

    def __post_init__(self):
        w, x, y, z = (float(c) for c in self.rotation)
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if not math.isfinite(n) or n < 1e-12:
            raise ValueError(f"degenerate quaternion {self.rotation!r}")
        object.__setattr__(self, "rotation", (w / n, x / n, y / n, z / n))
        tx, ty, tz = (float(c) for c in self.translation)
        if not (math.isfinite(tx) and math.isfinite(ty) and math.isfinite(tz)):
            raise ValueError(f"non-finite translation {self.translation!r}")
        object.__setattr__(self, "translation", (tx, ty, tz))

    # -- constructors ------------------------------------------------------

    @staticmethod
    def identity(from_frame=None, to_frame=None) -> "RigidTransform":
        return RigidTransform((1.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0), from_frame, to_frame)

    @staticmethod
    def from_translation(x, y, z, from_frame=None, to_frame=None) -> "RigidTransform":
        return RigidTransform((1.0, 0.0, 0.0, 0.0), (x, y, z), from_frame, to_frame)

    @staticmethod
    def from_axis_angle(axis, angle_deg, translation=(0.0, 0.0, 0.0),
                        from_frame=None, to_frame=None) -> "RigidTransform":
        """Rotation of `angle_deg` about `axis` (need not be unit length)."""
        ax, ay, az = (float(c) for c in axis)
        n = math.sqrt(ax * ax + ay * ay + az * az)
        if n < 1e-12:
            raise ValueError("rotation axis must be non-zero")
        half = math.radians(angle_deg) / 2.0
        s = math.sin(half) / n
        return RigidTransform(
            (math.cos(half), ax * s, ay * s, az * s), translation, from_frame, to_frame
        )

    @staticmethod
    def from_matrix(m, from_frame=None, to_frame=None) -> "RigidTransform":
        """Build from a 4x4 (or 3x4) row-major homogeneous matrix."""
        m = np.asarray(m, dtype=float)
        if m.shape not in ((4, 4), (3, 4)):
            raise ValueError(f"expected 4x4 or 3x4 matrix, got {m.shape}")
        r = m[:3, :3]
        t = (float(m[0, 3]), float(m[1, 3]), float(m[2, 3]))
        return RigidTransform(_quat_from_rotmat(r), t, from_frame, to_frame)

    # -- algebra -----------------------------------------------------------

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self∘other: apply `other` first, then `self`."""
        if (
            self.from_frame is not None
            and other.to_frame is not None
            and self.from_frame is not other.to_frame
        ):
            raise FrameMismatchError(
                f"cannot compose {self.from_frame}<-... after ...->{other.to_frame}"
            )
        q = _qmul(self.rotation, other.rotation)
        rt = _qrotate(self.rotation, other.translation)
        t = self.translation
        return RigidTransform(
            q,
            (rt[0] + t[0], rt[1] + t[1], rt[2] + t[2]),
            other.from_frame,
            self.to_frame,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def invert(self) -> "RigidTransform":
        w, x, y, z = self.rotation
        qc = (w, -x, -y, -z)
        rt = _qrotate(qc, self.translation)
        return RigidTransform(
            qc, (-rt[0], -rt[1], -rt[2]), self.to_frame, self.from_frame
        )

    def apply(self, point) -> tuple[float, float, float]:
        """Map a single 3-point: R @ p + t."""
        p = (float(point[0]), float(point[1]), float(point[2]))
        r = _qrotate(self.rotation, p)
        t = self.translation
        return (r[0] + t[0], r[1] + t[1], r[2] + t[2])

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        """Map an (N, 3) array of points through the transform.

        Written as elementwise multiply-adds rather than a matmul so the
        rounding of each output element is independent of N; a point mapped
        alone or inside a batch produces bit-identical coordinates.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        r = self.rotation_matrix()
        t = self.translation
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        out = np.empty_like(pts)
        out[:, 0] = r[0, 0] * x + r[0, 1] * y + r[0, 2] * z + t[0]
        out[:, 1] = r[1, 0] * x + r[1, 1] * y + r[1, 2] * z + t[1]
        out[:, 2] = r[2, 0] * x + r[2, 1] * y + r[2, 2] * z + t[2]
        return out

    # -- conversions -------------------------------------------------------

    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.rotation
        xx, yy, zz = x * x, y * y, z * z
        xy, xz, yz = x * y, x * z, y * z
        wx, wy, wz = w * x, w * y, w * z
        return np.array(
            [
                [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
                [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
                [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
            ]
        )

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix()
        m[:3, 3] = self.translation
        return m

    def angle_deg(self) -> float:
        """Rotation angle of this transform, in degrees."""
        w, x, y, z = self.rotation
        return math.degrees(2.0 * math.atan2(math.sqrt(x * x + y * y + z * z), abs(w)))

    def retagged(self, from_frame, to_frame) -> "RigidTransform":
        return RigidTransform(self.rotation, self.translation, from_frame, to_frame)

    def is_close(self, other: "RigidTransform", tol_mm=1e-9, tol_deg=1e-9) -> bool:
        d = pose_delta(self, other)
        return d.distance <= tol_mm and d.angle <= tol_deg


def _quat_from_rotmat(r: np.ndarray) -> tuple[float, float, float, float]:
    # Shepperd's method: branch on the largest of trace and diagonal entries.
    t = r[0, 0] + r[1, 1] + r[2, 2]
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        return (
            0.25 * s,
            (r[2, 1] - r[1, 2]) / s,
            (r[0, 2] - r[2, 0]) / s,
            (r[1, 0] - r[0, 1]) / s,
        )
    if r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        return (
            (r[2, 1] - r[1, 2]) / s,
            0.25 * s,
            (r[0, 1] + r[1, 0]) / s,
            (r[0, 2] + r[2, 0]) / s,
        )
    if r[1, 1] >= r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        return (
            (r[0, 2] - r[2, 0]) / s,
            (r[0, 1] + r[1, 0]) / s,
            0.25 * s,
            (r[1, 2] + r[2, 1]) / s,
        )
    s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
    return (
        (r[1, 0] - r[0, 1]) / s,
        (r[0, 2] + r[2, 0]) / s,
        (r[1, 2] + r[2, 1]) / s,
        0.25 * s,
    )


@dataclass(frozen=True)
class PoseDelta:
    """Translational (mm) and rotational (degrees) difference of two poses."""

    distance: float
    angle: float

    def __post_init__(self):
        if self.distance < 0.0:
            raise ValueError("distance must be >= 0")
        if not 0.0 <= self.angle <= 180.0 + 1e-12:
            raise ValueError(f"angle {self.angle} outside [0, 180]")


@dataclass(frozen=True)
class TaggedPointCloud:
    """3D points (mm) bound to an explicit coordinate frame.

    `points` is an (N, 3) float64 array, frozen read-only after construction.
    """

    frame: FrameId
    points: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "timestamp", float(self.timestamp))
        if not isinstance(self.frame, FrameId):
            raise TypeError(f"frame must be a FrameId, got {self.frame!r}")

    def __len__(self) -> int:
        return self.points.shape[0]

    def transformed(self, t: RigidTransform, timestamp=None) -> "TaggedPointCloud":
        """Map the cloud into t.to_frame; t must map from this cloud's frame."""
        if t.from_frame is None or t.to_frame is None:
            raise FrameMismatchError("cloud transforms require frame-tagged transforms")
        if t.from_frame is not self.frame:
            raise FrameMismatchError(
                f"transform maps from {t.from_frame}, cloud is in {self.frame}"
            )
        return TaggedPointCloud(
            t.to_frame,
            t.apply_points(self.points),
            self.timestamp if timestamp is None else timestamp,
        )


# -- spec operations as module-level functions -----------------------------


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """a∘b: the transform that applies b first, then a."""
    return a.compose(b)


def invert(t: RigidTransform) -> RigidTransform:
    return t.invert()


def apply_to_point(t: RigidTransform, point, from_frame=None, to_frame=None):
    """Map a point through t, checking declared frame endpoints.

    When `from_frame`/`to_frame` are given and t is frame-tagged, both must
    agree with t's endpoints; violations raise FrameMismatchError.
    """
    if from_frame is not None and t.from_frame is not None and from_frame is not t.from_frame:
        raise FrameMismatchError(f"point in {from_frame}, transform from {t.from_frame}")
    if to_frame is not None and t.to_frame is not None and to_frame is not t.to_frame:
        raise FrameMismatchError(f"requested {to_frame}, transform maps to {t.to_frame}")
    return t.apply(point)


def pose_delta(a: RigidTransform, b: RigidTransform) -> PoseDelta:
    """Euclidean distance (mm) and geodesic rotation angle (degrees) of a vs b.

    The angle is that of the relative rotation, mathematically
    arccos((trace(R_rel) - 1) / 2) clamped to [-1, 1], evaluated from the
    relative quaternion as 2*atan2(|vec|, |w|). The atan2 form is identical
    in exact arithmetic but keeps precision near zero where arccos quantizes
    at ~1e-6 degrees, and it is exactly symmetric: swapping a and b
    conjugates the relative quaternion, which negates the vector part bit
    for bit.
    """
    if (
        a.from_frame is not None
        and b.from_frame is not None
        and (a.from_frame is not b.from_frame or a.to_frame is not b.to_frame)
    ):
        raise FrameMismatchError(
            f"pose_delta endpoints differ: {a.from_frame}->{a.to_frame}"
            f" vs {b.from_frame}->{b.to_frame}"
        )
    ta, tb = a.translation, b.translation
    dx, dy, dz = ta[0] - tb[0], ta[1] - tb[1], ta[2] - tb[2]
    dist = math.sqrt(dx * dx + dy * dy + dz * dz)
    aw, ax, ay, az = a.rotation
    bw, bx, by, bz = b.rotation
    # vec(a.rotation * conj(b.rotation)), grouped in balanced pairs so that
    # swapping a and b negates each component bit for bit and a == b cancels
    # to exactly zero.
    w = aw * bw + ax * bx + ay * by + az * bz
    x = (ax * bw - aw * bx) + (az * by - ay * bz)
    y = (ay * bw - aw * by) + (ax * bz - az * bx)
    z = (az * bw - aw * bz) + (ay * bx - ax * by)
    angle = math.degrees(2.0 * math.atan2(math.sqrt(x * x + y * y + z * z), abs(w)))
    return PoseDelta(dist, min(angle, 180.0))


# -- JSON wire format ------------------------------------------------------


def transform_to_json(t: RigidTransform) -> list[list[float]]:
    """Row-major 4x4 matrix, the interchange form for poses."""
    return [[float(v) for v in row] for row in t.matrix()]


def transform_from_json(rows, from_frame=None, to_frame=None) -> RigidTransform:
    return RigidTransform.from_matrix(np.asarray(rows, dtype=float), from_frame, to_frame)
