"""Analytic surface primitives: exact distance fields, areas, and sampling.

The device is modeled as a union of three primitive kinds so that surface
area, uniform sampling, and point-to-surface distance all stay closed form:

* ArcTube   -- a tube of radius `tube_radius` swept along a circular arc in
               the local y-z plane, with spherical end caps. This is the C.
* CappedCylinder -- lateral surface plus两 end disks; the support column.
* Box       -- six rectangular faces; the wheeled base.
* Plane     -- an infinite plane, used as a calibration target in sensor
               tests (no finite area; sampling is not supported).

Signed distance conventions: negative inside the solid, zero on the surface,
positive outside, and the magnitude is the true Euclidean distance to the
surface. Sampling is stratified along the dominant parameter of each patch
and area-exact in expectation; counts are round(density * area).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform


@dataclass(frozen=True)
class ArcTube:
    """Tube with spherical caps along a circular arc in the local y-z plane.

    The arc is c(phi) = (0, R sin(phi), -R cos(phi)) for phi in
    [phi_start_deg, phi_end_deg]; phi = 0 points down (-z), phi = 90 points
    to +y, so the gap of a partial arc faces -y.
    """

    arc_radius: float
    tube_radius: float
    phi_start_deg: float = -15.0
    phi_end_deg: float = 195.0

    def __post_init__(self):
        if not 0 < self.tube_radius < self.arc_radius:
            raise ValueError("need 0 < tube_radius < arc_radius")
        if not self.phi_end_deg > self.phi_start_deg:
            raise ValueError("empty arc span")

    @property
    def _phi0(self) -> float:
        return math.radians(self.phi_start_deg)

    @property
    def _phi1(self) -> float:
        return math.radians(self.phi_end_deg)

    def _arc_point(self, phi):
        return np.stack(
            [np.zeros_like(phi), self.arc_radius * np.sin(phi), -self.arc_radius * np.cos(phi)],
            axis=-1,
        )

    def area(self) -> float:
        # Lateral: the (R + r cos theta) factor integrates out over the tube
        # angle, leaving exactly dphi * 2*pi*r*R. Caps: two hemispheres.
        lateral = (self._phi1 - self._phi0) * 2.0 * math.pi * self.tube_radius * self.arc_radius
        caps = 4.0 * math.pi * self.tube_radius**2
        return lateral + caps

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        phi = np.arctan2(y, -z)
        # Normalize into [phi0, phi0 + 2*pi) to decide arc membership.
        rel = np.mod(phi - self._phi0, 2.0 * math.pi)
        in_arc = rel <= (self._phi1 - self._phi0)
        rho = np.hypot(y, z)
        d_circle = np.hypot(rho - self.arc_radius, x)
        e0 = self._arc_point(np.asarray(self._phi0))
        e1 = self._arc_point(np.asarray(self._phi1))
        d_ends = np.minimum(
            np.linalg.norm(pts - e0, axis=1), np.linalg.norm(pts - e1, axis=1)
        )
        return np.where(in_arc, d_circle, d_ends) - self.tube_radius

    def sample(self, density_per_mm2: float, rng: np.random.Generator) -> np.ndarray:
        phi0, phi1 = self._phi0, self._phi1
        r, big_r = self.tube_radius, self.arc_radius
        n_lat = int(round(density_per_mm2 * (phi1 - phi0) * 2.0 * math.pi * r * big_r))
        out = []
        if n_lat > 0:
            strata = (np.arange(n_lat) + rng.random(n_lat)) / n_lat
            phi = phi0 + strata * (phi1 - phi0)
            theta = _sample_tube_angle(n_lat, big_r, r, rng)
            e_rad = np.stack([np.zeros(n_lat), np.sin(phi), -np.cos(phi)], axis=1)
            e_norm = np.zeros((n_lat, 3))
            e_norm[:, 0] = 1.0
            center = self._arc_point(phi)
            out.append(center + r * (np.cos(theta)[:, None] * e_rad + np.sin(theta)[:, None] * e_norm))
        for phi_end, sign in ((phi0, -1.0), (phi1, 1.0)):
            n_cap = int(round(density_per_mm2 * 2.0 * math.pi * r * r))
            if n_cap == 0:
                continue
            tangent = sign * np.array([0.0, math.cos(phi_end), math.sin(phi_end)])
            dirs = rng.normal(size=(n_cap, 3))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            dots = dirs @ tangent
            dirs[dots < 0.0] *= -1.0
            out.append(self._arc_point(np.asarray(phi_end)) + r * dirs)
        return np.concatenate(out, axis=0) if out else np.empty((0, 3))


def _sample_tube_angle(n, big_r, tube_r, rng):
    """Tube angles with density proportional to (R + r*cos(theta))."""
    got = np.empty(0)
    while got.size < n:
        cand = rng.uniform(0.0, 2.0 * math.pi, size=max(64, 2 * (n - got.size)))
        accept = rng.random(cand.size) < (big_r + tube_r * np.cos(cand)) / (big_r + tube_r)
        got = np.concatenate([got, cand[accept]])
    return got[:n]


@dataclass(frozen=True)
class CappedCylinder:
    """Cylinder along the local z axis, centered at the origin, with end disks."""

    radius: float
    half_height: float

    def __post_init__(self):
        if self.radius <= 0 or self.half_height <= 0:
            raise ValueError("radius and half_height must be positive")

    def area(self) -> float:
        return (
            2.0 * math.pi * self.radius * 2.0 * self.half_height
            + 2.0 * math.pi * self.radius**2
        )

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        dr = np.hypot(pts[:, 0], pts[:, 1]) - self.radius
        dz = np.abs(pts[:, 2]) - self.half_height
        outside = np.hypot(np.maximum(dr, 0.0), np.maximum(dz, 0.0))
        inside = np.minimum(np.maximum(dr, dz), 0.0)
        return outside + inside

    def sample(self, density_per_mm2: float, rng: np.random.Generator) -> np.ndarray:
        out = []
        n_lat = int(round(density_per_mm2 * 2.0 * math.pi * self.radius * 2.0 * self.half_height))
        if n_lat > 0:
            strata = (np.arange(n_lat) + rng.random(n_lat)) / n_lat
            z = -self.half_height + strata * 2.0 * self.half_height
            theta = rng.uniform(0.0, 2.0 * math.pi, n_lat)
            out.append(
                np.stack([self.radius * np.cos(theta), self.radius * np.sin(theta), z], axis=1)
            )
        n_disk = int(round(density_per_mm2 * math.pi * self.radius**2))
        for zc in (-self.half_height, self.half_height):
            if n_disk == 0:
                continue
            rr = self.radius * np.sqrt(rng.random(n_disk))
            theta = rng.uniform(0.0, 2.0 * math.pi, n_disk)
            out.append(
                np.stack([rr * np.cos(theta), rr * np.sin(theta), np.full(n_disk, zc)], axis=1)
            )
        return np.concatenate(out, axis=0) if out else np.empty((0, 3))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box centered at the local origin; half_sizes in mm."""

    half_sizes: tuple[float, float, float]

    def __post_init__(self):
        hx, hy, hz = self.half_sizes
        if min(hx, hy, hz) <= 0:
            raise ValueError("half sizes must be positive")
        object.__setattr__(self, "half_sizes", (float(hx), float(hy), float(hz)))

    def area(self) -> float:
        hx, hy, hz = self.half_sizes
        return 8.0 * (hx * hy + hy * hz + hx * hz)

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        q = np.abs(pts) - np.asarray(self.half_sizes)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    def sample(self, density_per_mm2: float, rng: np.random.Generator) -> np.ndarray:
        hx, hy, hz = self.half_sizes
        out = []
        # (axis held fixed, half-extents of the two free axes)
        faces = [(0, hx, (hy, hz)), (1, hy, (hx, hz)), (2, hz, (hx, hy))]
        for axis, h_fixed, (ha, hb) in faces:
            n_face = int(round(density_per_mm2 * 4.0 * ha * hb))
            for sign in (-1.0, 1.0):
                if n_face == 0:
                    continue
                u = rng.uniform(-ha, ha, n_face)
                v = rng.uniform(-hb, hb, n_face)
                pts = np.empty((n_face, 3))
                pts[:, axis] = sign * h_fixed
                free = [i for i in range(3) if i != axis]
                pts[:, free[0]] = u
                pts[:, free[1]] = v
                out.append(pts)
        return np.concatenate(out, axis=0) if out else np.empty((0, 3))


@dataclass(frozen=True)
class Plane:
    """Infinite plane through `point` with unit `normal`; test fixture only.

    The field is signed by side of the plane; its magnitude is the distance
    to the sheet from either side.
    """

    point: tuple[float, float, float]
    normal: tuple[float, float, float]

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise ValueError("normal must be non-zero")
        object.__setattr__(self, "normal", tuple(n / norm))
        object.__setattr__(self, "point", tuple(float(c) for c in self.point))

    def area(self) -> float:
        return math.inf

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        return (pts - np.asarray(self.point)) @ np.asarray(self.normal)

    def sample(self, density_per_mm2, rng):
        raise NotImplementedError("infinite plane cannot be area-sampled")


@dataclass(frozen=True)
class PlacedSurface:
    """A primitive positioned in the world by a rigid pose (local -> world)."""

    surface: object
    pose: RigidTransform

    def sdf_world(self, pts_world: np.ndarray) -> np.ndarray:
        local = self.pose.invert().apply_points(pts_world)
        return self.surface.sdf(local)

    def sample_world(self, density_per_mm2: float, rng: np.random.Generator) -> np.ndarray:
        return self.pose.apply_points(self.surface.sample(density_per_mm2, rng))


def scene_sdf(placed: list[PlacedSurface], pts_world: np.ndarray) -> np.ndarray:
    """Signed union field: min over primitives (rigid poses preserve distance)."""
    if not placed:
        raise ValueError("empty scene")
    values = np.stack([p.sdf_world(pts_world) for p in placed], axis=0)
    return values.min(axis=0)


def scene_surface_distance(
    placed: list[PlacedSurface], pts_world: np.ndarray, return_winner: bool = False
):
    """Unsigned distance to the nearest primitive surface, min over |sdf_i|.

    Unlike scene_sdf this stays valid when a signed field (e.g. a plane) is
    negative at the query point; it is the field ray marching must use.
    """
    if not placed:
        raise ValueError("empty scene")
    values = np.stack([np.abs(p.sdf_world(pts_world)) for p in placed], axis=0)
    if return_winner:
        winner = values.argmin(axis=0)
        return values.min(axis=0), winner
    return values.min(axis=0)
