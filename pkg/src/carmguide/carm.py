"""Parametric mobile C-arm: DOFs to poses, surface sampling, X-ray projection.

Kinematic chain, all joints in the device's neutral frame (isocenter at the
origin, source on -z, detector on +z, vertical axis +z):

    world <- Trans(base_x, base_y, 0) * Rz(wheel_yaw)     floor motion
          <- Trans(0, 0, column_height)                   column lift
          <- Rz(swivel) about the vertical axis through (0, arm_offset, 0)
          <- Ry(angular_tilt)                             horizontal arm axis
          <- Rx(orbital)                                  C-plane normal

The C opens toward -y; the support column stands at +y behind the isocenter.
Angles are degrees, lengths millimeters throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import FrameId, RigidTransform, TaggedPointCloud
from .surfaces import ArcTube, Box, CappedCylinder, PlacedSurface

DOF_NAMES = (
    "base_x",
    "base_y",
    "column_height",
    "wheel_yaw",
    "orbital",
    "angular_tilt",
    "swivel",
)

DOF_RANGES = {
    "column_height": (0.0, 450.0),
    "orbital": (-95.0, 95.0),
    "angular_tilt": (-190.0, 190.0),
    "swivel": (-12.0, 12.0),
}


class DofRangeError(ValueError):
    """A degree of freedom was set outside its mechanical range."""


class BehindSourceError(ValueError):
    """A keypoint lies on or behind the X-ray source plane."""


class DeltaTooLargeError(ValueError):
    """Pose correction outside the small-adjustment regime of the DOF hints."""


@dataclass(frozen=True)
class CArmDofs:
    """Degrees of freedom of the device; all default to the neutral position."""

    base_x: float = 0.0
    base_y: float = 0.0
    column_height: float = 0.0
    wheel_yaw: float = 0.0
    orbital: float = 0.0
    angular_tilt: float = 0.0
    swivel: float = 0.0

    def __post_init__(self):
        for name in DOF_NAMES:
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DofRangeError(f"{name} is not finite")
            lo_hi = DOF_RANGES.get(name)
            if lo_hi and not lo_hi[0] <= value <= lo_hi[1]:
                raise DofRangeError(
                    f"{name}={value} outside [{lo_hi[0]}, {lo_hi[1]}]"
                )
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in DOF_NAMES])

    @staticmethod
    def from_array(values) -> "CArmDofs":
        return CArmDofs(**{n: float(v) for n, v in zip(DOF_NAMES, values, strict=True)})

    def adjusted(self, increments: dict[str, float], clamp: bool = False) -> "CArmDofs":
        """Return dofs with `increments` added, optionally clamped to range."""
        updates = {}
        for name, delta in increments.items():
            if name not in DOF_NAMES:
                raise DofRangeError(f"unknown DOF {name!r}")
            value = getattr(self, name) + float(delta)
            if clamp and name in DOF_RANGES:
                lo, hi = DOF_RANGES[name]
                value = min(hi, max(lo, value))
            updates[name] = value
        return replace(self, **updates)


NEUTRAL_DOFS = CArmDofs()


@dataclass(frozen=True)
class CArmGeometry:
    """Physical layout: imaging geometry plus the surface primitive dimensions."""

    source_to_isocenter: float = 600.0
    source_to_detector: float = 1000.0
    detector_pixels: tuple[int, int] = (1024, 1024)
    pixel_pitch: float = 0.3
    arc_radius: float = 700.0
    arc_tube_radius: float = 75.0
    arc_span_deg: tuple[float, float] = (-15.0, 195.0)
    column_radius: float = 110.0
    column_length: float = 700.0
    arm_offset: float = 700.0
    isocenter_height: float = 900.0
    base_size: tuple[float, float, float] = (650.0, 850.0, 180.0)

    def __post_init__(self):
        if not 0.0 < self.source_to_isocenter < self.source_to_detector:
            raise ValueError("need 0 < source_to_isocenter < source_to_detector")
        if self.pixel_pitch <= 0.0:
            raise ValueError("pixel_pitch must be positive")
        w, h = self.detector_pixels
        if w <= 0 or h <= 0:
            raise ValueError("detector_pixels must be positive")


@dataclass(frozen=True)
class Keypoint3D:
    """A labeled world-frame point used as an X-ray evaluation marker."""

    id: str
    position: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))


def validate_keypoints(keypoints) -> None:
    ids = [k.id for k in keypoints]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate keypoint ids in {ids}")


@dataclass(frozen=True)
class FkPoses:
    """World poses of the kinematic chain at one DOF setting."""

    gantry: RigidTransform    # CARM -> WORLD, origin at the isocenter
    source: RigidTransform
    detector: RigidTransform


def _base_transform(dofs: CArmDofs) -> RigidTransform:
    return RigidTransform.from_translation(dofs.base_x, dofs.base_y, 0.0).compose(
        RigidTransform.from_axis_angle((0, 0, 1), dofs.wheel_yaw)
    )


def _lift_transform(dofs: CArmDofs) -> RigidTransform:
    return RigidTransform.from_translation(0.0, 0.0, dofs.column_height)


def forward_kinematics(dofs: CArmDofs, geom: CArmGeometry) -> FkPoses:
    """Gantry/source/detector world poses; neutral puts the isocenter at the
    world origin with the source at (0, 0, -source_to_isocenter)."""
    arm = geom.arm_offset
    swivel = (
        RigidTransform.from_translation(0.0, arm, 0.0)
        .compose(RigidTransform.from_axis_angle((0, 0, 1), dofs.swivel))
        .compose(RigidTransform.from_translation(0.0, -arm, 0.0))
    )
    tilt = RigidTransform.from_axis_angle((0, 1, 0), dofs.angular_tilt)
    orbital = RigidTransform.from_axis_angle((1, 0, 0), dofs.orbital)
    gantry = (
        _base_transform(dofs)
        .compose(_lift_transform(dofs))
        .compose(swivel)
        .compose(tilt)
        .compose(orbital)
    )
    source = gantry.compose(
        RigidTransform.from_translation(0.0, 0.0, -geom.source_to_isocenter)
    )
    detector = gantry.compose(
        RigidTransform.from_translation(
            0.0, 0.0, geom.source_to_detector - geom.source_to_isocenter
        )
    )
    return FkPoses(
        gantry=gantry.retagged(FrameId.CARM, FrameId.WORLD),
        source=source,
        detector=detector.retagged(FrameId.DETECTOR, FrameId.WORLD),
    )


def placed_surfaces(dofs: CArmDofs, geom: CArmGeometry) -> list[PlacedSurface]:
    """The three device surfaces positioned in the world at the given DOFs.

    The C tube rides the full chain; the column rides the lift; the base box
    only follows floor motion.
    """
    gantry = forward_kinematics(dofs, geom).gantry
    base = _base_transform(dofs)
    floor = -geom.isocenter_height
    column_center_z = floor + geom.base_size[2] + geom.column_length / 2.0
    column_pose = base.compose(_lift_transform(dofs)).compose(
        RigidTransform.from_translation(0.0, geom.arm_offset, column_center_z)
    )
    base_pose = base.compose(
        RigidTransform.from_translation(0.0, geom.arm_offset, floor + geom.base_size[2] / 2.0)
    )
    lo, hi = geom.arc_span_deg
    return [
        PlacedSurface(
            ArcTube(geom.arc_radius, geom.arc_tube_radius, lo, hi),
            gantry.retagged(None, None),
        ),
        PlacedSurface(
            CappedCylinder(geom.column_radius, geom.column_length / 2.0), column_pose
        ),
        PlacedSurface(Box(tuple(s / 2.0 for s in geom.base_size)), base_pose),
    ]


def surface_area(geom: CArmGeometry) -> float:
    """Total analytic surface area (mm^2) of the device primitives."""
    return sum(p.surface.area() for p in placed_surfaces(NEUTRAL_DOFS, geom))


def sample_surface(
    dofs: CArmDofs,
    geom: CArmGeometry,
    density_per_m2: float,
    seed: int,
    timestamp: float = 0.0,
) -> TaggedPointCloud:
    """Sample the device surfaces into a world-frame cloud.

    Point count tracks density * area; identical (dofs, seed) give identical
    clouds bit for bit.
    """
    if density_per_m2 <= 0.0:
        raise ValueError("density must be positive")
    rng = np.random.default_rng(seed)
    density_mm2 = density_per_m2 * 1e-6
    parts = [p.sample_world(density_mm2, rng) for p in placed_surfaces(dofs, geom)]
    return TaggedPointCloud(FrameId.WORLD, np.concatenate(parts, axis=0), timestamp)


@dataclass(frozen=True)
class ProjectedPixel:
    """Continuous detector pixel coordinates; in_view marks detector bounds."""

    u: float
    v: float
    in_view: bool


def xray_project(point: Keypoint3D, dofs: CArmDofs, geom: CArmGeometry) -> ProjectedPixel:
    """Central projection of a world keypoint from the source onto the detector.

    Pixel (0, 0) is the detector corner; the principal ray hits the detector
    center (W/2, H/2). Points on or behind the source plane raise
    BehindSourceError; points projecting past the detector edge come back
    with in_view=False.
    """
    gantry = forward_kinematics(dofs, geom).gantry
    px, py, pz = gantry.invert().apply(point.position)
    depth = pz + geom.source_to_isocenter  # along the principal ray from the source
    if depth <= 1e-9:
        raise BehindSourceError(
            f"keypoint {point.id!r} at depth {depth:.3g} mm from the source plane"
        )
    scale = geom.source_to_detector / depth
    xd = px * scale
    yd = py * scale
    w, h = geom.detector_pixels
    u = xd / geom.pixel_pitch + w / 2.0
    v = yd / geom.pixel_pitch + h / 2.0
    return ProjectedPixel(u, v, bool(0.0 <= u <= w and 0.0 <= v <= h))


def project_keypoints(
    keypoints, dofs: CArmDofs, geom: CArmGeometry
) -> dict[str, tuple[float, float]]:
    """Project a marker set, keeping only the in-view ones."""
    validate_keypoints(keypoints)
    out = {}
    for kp in keypoints:
        try:
            hit = xray_project(kp, dofs, geom)
        except BehindSourceError:
            continue
        if hit.in_view:
            out[kp.id] = (hit.u, hit.v)
    return out


# -- DOF adjustment hints ---------------------------------------------------

# Rotational DOFs are priced as arc length at this lever so that a pure
# translation correction lands on the base/column DOFs instead of a cheap
# swivel+yaw combination (leakage into that pair falls off as 1/lever^2).
_ROTATION_LEVER_MM = 4000.0
_FD_STEP = {"mm": 1e-2, "deg": 1e-3}
_DOF_UNITS = ("mm", "mm", "mm", "deg", "deg", "deg", "deg")


@dataclass(frozen=True)
class DofAdjustment:
    """Suggested DOF increments; `reliable` is False near kinematic singularities."""

    increments: dict[str, float]
    reliable: bool
    condition: float

    def nonzero(self, tol: float = 1e-9) -> dict[str, float]:
        return {k: v for k, v in self.increments.items() if abs(v) > tol}


def _pose_twist(t: RigidTransform) -> np.ndarray:
    """World twist [tx, ty, tz, rx, ry, rz] (mm, rad) of a near-identity pose."""
    w, x, y, z = t.rotation
    if w < 0.0:
        w, x, y, z = -w, -x, -y, -z
    vn = math.sqrt(x * x + y * y + z * z)
    if vn < 1e-12:
        rot = (2.0 * x, 2.0 * y, 2.0 * z)
    else:
        angle = 2.0 * math.atan2(vn, w)
        rot = (x / vn * angle, y / vn * angle, z / vn * angle)
    return np.array([*t.translation, *rot])


def dof_adjustment_from_delta(
    delta: RigidTransform, current: CArmDofs, geom: CArmGeometry
) -> DofAdjustment:
    """One damped least-squares DOF step that moves the gantry by `delta`.

    `delta` is the world-frame correction (live -> saved); adding the returned
    increments to `current` moves the device most of the way onto the target.
    Only small corrections are accepted (<= 15 degrees, <= 200 mm): this is a
    guidance hint, not a global inverse-kinematics solver.
    """
    angle = delta.angle_deg()
    dist = math.sqrt(sum(c * c for c in delta.translation))
    if angle > 15.0 or dist > 200.0:
        raise DeltaTooLargeError(
            f"correction of {dist:.1f} mm / {angle:.2f} deg exceeds the hint regime"
        )
    fk0 = forward_kinematics(current, geom).gantry
    fk0_inv = fk0.invert()
    target = delta.retagged(None, None).compose(fk0.retagged(None, None))
    err = _pose_twist(target.compose(fk0_inv.retagged(None, None)))

    q0 = current.as_array()
    jac = np.zeros((6, len(DOF_NAMES)))
    for k, unit in enumerate(_DOF_UNITS):
        h = _FD_STEP[unit]
        plus, minus = q0.copy(), q0.copy()
        plus[k] += h
        minus[k] -= h
        try:
            fk_plus = forward_kinematics(CArmDofs.from_array(plus), geom).gantry
            fk_minus = forward_kinematics(CArmDofs.from_array(minus), geom).gantry
        except DofRangeError:
            # One-sided difference at a range limit.
            plus, minus = q0.copy(), q0.copy()
            if q0[k] + h <= DOF_RANGES.get(DOF_NAMES[k], (-np.inf, np.inf))[1]:
                plus[k] += h
            else:
                minus[k] -= h
            fk_plus = forward_kinematics(CArmDofs.from_array(plus), geom).gantry
            fk_minus = forward_kinematics(CArmDofs.from_array(minus), geom).gantry
        step = plus[k] - minus[k]
        twist = _pose_twist(
            fk_plus.retagged(None, None).compose(fk_minus.invert().retagged(None, None))
        )
        jac[:, k] = twist / step

    # Scale rotations (rows: rad -> mm at the lever; columns: deg -> lever-mm)
    # so the least-norm solution is taken in a single length-like unit.
    row_scale = np.array([1.0] * 3 + [_ROTATION_LEVER_MM] * 3)
    col_scale = np.array(
        [1.0 if u == "mm" else _ROTATION_LEVER_MM * math.pi / 180.0 for u in _DOF_UNITS]
    )
    a = jac * row_scale[:, None] / col_scale[None, :]
    e_scaled = err * row_scale

    sv = np.linalg.svd(a, compute_uv=False)
    condition = float(sv[0] / sv[-1]) if sv[-1] > 0.0 else math.inf
    if not math.isfinite(condition) or sv[-1] < 1e-8 * sv[0]:
        return DofAdjustment({n: 0.0 for n in DOF_NAMES}, False, condition)

    lam = 1e-4 * sv[0]
    ata = a @ a.T + lam * lam * np.eye(6)
    s = a.T @ np.linalg.solve(ata, e_scaled)
    dq = s / col_scale
    return DofAdjustment(dict(zip(DOF_NAMES, (float(v) for v in dq))), True, condition)


DEFAULT_PRESETS: dict[str, CArmDofs] = {
    "neutral": NEUTRAL_DOFS,
    "inlet": CArmDofs(angular_tilt=-40.0),
    "outlet": CArmDofs(angular_tilt=40.0),
    "cranial_oblique": CArmDofs(wheel_yaw=45.0),
    "caudal_oblique": CArmDofs(wheel_yaw=-45.0),
}
