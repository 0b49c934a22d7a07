"""Point-to-point ICP between the live cloud and a saved view.

Correspondences come from a balanced k-d tree over the saved cloud (scipy's
cKDTree; exact nearest neighbors), gated by a maximum correspondence
distance so partial views tolerate non-overlap. Each iteration solves the
closed-form rigid fit (SVD of the cross-covariance with a reflection guard)
and the per-iteration RMS over matched pairs is recorded so monotonicity is
checkable by callers. Both clouds are expected in the world frame: the
device is already co-registered by construction and ICP measures residual
misalignment only, so iteration starts from the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import FrameMismatchError, RigidTransform, TaggedPointCloud


class EmptyIndexError(ValueError):
    """Nearest-neighbor query against an index with no points."""


class InsufficientOverlapError(ValueError):
    """Too few gated correspondences to fit a rigid transform."""


class SpatialIndex:
    """Balanced k-d tree over a tagged cloud; queries are exact."""

    def __init__(self, cloud: TaggedPointCloud):
        self.frame = cloud.frame
        self._points = cloud.points
        self._tree = cKDTree(cloud.points) if len(cloud) else None

    def __len__(self) -> int:
        return self._points.shape[0]

    def query(self, pts: np.ndarray):
        """Vectorized nearest neighbors: (distances, indices) for (N, 3) pts."""
        if self._tree is None:
            raise EmptyIndexError("nearest-neighbor query on an empty index")
        return self._tree.query(np.asarray(pts, dtype=float).reshape(-1, 3))

    def point(self, index: int) -> np.ndarray:
        return self._points[index]


def nearest_neighbor(index: SpatialIndex, query) -> tuple[tuple[float, float, float], float]:
    """Exact nearest indexed point to `query` and its Euclidean distance (mm)."""
    dist, idx = index.query(np.asarray(query, dtype=float).reshape(1, 3))
    p = index.point(int(idx[0]))
    return (float(p[0]), float(p[1]), float(p[2])), float(dist[0])


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    rms_delta_threshold: float = 1e-4      # mm
    max_correspondence_distance: float = 150.0  # mm
    min_correspondences: int = 100

    def __post_init__(self):
        if (
            self.max_iterations <= 0
            or self.rms_delta_threshold <= 0
            or self.max_correspondence_distance <= 0
            or self.min_correspondences <= 0
        ):
            raise ValueError("all ICP parameters must be positive")


@dataclass(frozen=True)
class AlignmentReport:
    """Outcome of one ICP run; delta maps live points onto the saved cloud."""

    delta: RigidTransform
    rms: float
    iterations: int
    converged: bool
    correspondence_count: int
    rms_history: tuple[float, ...] = ()
    dof_hints: object = None

    def __post_init__(self):
        if self.rms < 0.0:
            raise ValueError("rms must be >= 0")

    def to_dict(self) -> dict:
        from .geometry import transform_to_json

        hints = None
        if self.dof_hints is not None:
            hints = {
                "increments": self.dof_hints.increments,
                "reliable": self.dof_hints.reliable,
            }
        return {
            "delta": transform_to_json(self.delta),
            "distance_mm": math.sqrt(sum(c * c for c in self.delta.translation)),
            "angle_deg": self.delta.angle_deg(),
            "rms_mm": self.rms,
            "iterations": self.iterations,
            "converged": self.converged,
            "correspondences": self.correspondence_count,
            "dof_hints": hints,
        }


def _rigid_fit(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform mapping src onto dst (Kabsch, det guard)."""
    src_c = src.mean(axis=0)
    dst_c = dst.mean(axis=0)
    h = (src - src_c).T @ (dst - dst_c)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = dst_c - rot @ src_c
    m = np.eye(4)
    m[:3, :3] = rot
    m[:3, 3] = t
    return RigidTransform.from_matrix(m)


def icp_align(
    live: TaggedPointCloud,
    saved: TaggedPointCloud,
    params: IcpParams = IcpParams(),
) -> AlignmentReport:
    """Align the live cloud onto a saved one; returns the live->saved delta.

    Raises FrameMismatchError if the clouds disagree on frame and
    InsufficientOverlapError when fewer than `min_correspondences` pairs pass
    the distance gate at any iteration.
    """
    if live.frame is not saved.frame:
        raise FrameMismatchError(f"live cloud {live.frame} vs saved {saved.frame}")
    if len(live) == 0 or len(saved) == 0:
        raise ValueError("ICP requires two non-empty clouds")
    index = SpatialIndex(saved)
    delta = RigidTransform.identity()
    moved = live.points
    prev_rms = None
    history = []
    converged = False
    iterations = 0
    count = 0
    for iterations in range(1, params.max_iterations + 1):
        dists, idx = index.query(moved)
        mask = dists <= params.max_correspondence_distance
        count = int(mask.sum())
        if count < params.min_correspondences:
            raise InsufficientOverlapError(
                f"{count} correspondences within "
                f"{params.max_correspondence_distance} mm at iteration {iterations};"
                f" need >= {params.min_correspondences}"
            )
        rms = float(math.sqrt(np.mean(dists[mask] ** 2)))
        history.append(rms)
        if rms == 0.0 or (
            prev_rms is not None and abs(prev_rms - rms) < params.rms_delta_threshold
        ):
            converged = True
            break
        prev_rms = rms
        step = _rigid_fit(moved[mask], saved.points[idx[mask]])
        delta = step.compose(delta)
        moved = delta.apply_points(live.points)
    return AlignmentReport(
        delta=delta.retagged(live.frame, saved.frame),
        rms=history[-1],
        iterations=iterations,
        converged=converged,
        correspondence_count=count,
        rms_history=tuple(history),
    )


def with_dof_hints(report: AlignmentReport, current_dofs, geom) -> AlignmentReport:
    """Attach DOF guidance to a report; unhintable deltas leave hints empty."""
    from dataclasses import replace

    from .carm import DeltaTooLargeError, dof_adjustment_from_delta

    try:
        hints = dof_adjustment_from_delta(
            report.delta.retagged(None, None), current_dofs, geom
        )
    except DeltaTooLargeError:
        hints = None
    return replace(report, dof_hints=hints)
