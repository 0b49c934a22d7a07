"""Headset pose recovery from known world landmarks.

Given pixel observations of landmarks with known world positions, recover the
world-to-headset pose by Levenberg-Marquardt over the sum of squared pixel
reprojection errors. The pose step is a left-multiplied local perturbation in
the camera frame, twist-ordered (tx, ty, tz, wx, wy, wz) with rotations in
radians, and the reprojection Jacobian is analytic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import FrameId, RigidTransform
from .depth import CameraIntrinsics

LM_LAMBDA_INIT = 1e-3
LM_LAMBDA_MAX = 1e12
LM_MAX_ITERATIONS = 100
LM_STEP_TOL = 1e-10
LM_COST_TOL = 1e-8
MIN_CORRESPONDENCES = 4


class UnderdeterminedError(ValueError):
    """Fewer correspondences than needed to constrain a 6-DOF pose."""


class BehindCameraError(ValueError):
    """A landmark has non-positive depth under the hypothesized pose."""


@dataclass(frozen=True)
class Landmark:
    id: str
    position: tuple[float, float, float]  # world, mm

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))


@dataclass(frozen=True)
class FeatureObservation:
    landmark_id: str
    pixel: tuple[float, float]
    timestamp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pixel", tuple(float(c) for c in self.pixel))


@dataclass(frozen=True)
class TrackerEstimate:
    pose: RigidTransform          # WORLD -> TECHNICIAN
    rms: float                    # px, sqrt(mean squared pixel distance)
    iterations: int
    converged: bool

    def __post_init__(self):
        if self.rms < 0.0:
            raise ValueError("rms must be >= 0")


def project_feature(
    pose: RigidTransform, landmark: Landmark, intrinsics: CameraIntrinsics
) -> tuple[float, float]:
    """Pinhole projection of a world landmark under a world->camera pose.

    Deliberately routed through the same batch arithmetic as the solver so
    that observations synthesized here are reproduced bit for bit.
    """
    px, py, pz = pose.apply_points(np.asarray(landmark.position))[0]
    if pz <= 1e-9:
        raise BehindCameraError(f"landmark {landmark.id!r} at depth {pz:.3g} mm")
    return (
        float(intrinsics.cx + intrinsics.fx * px / pz),
        float(intrinsics.cy + intrinsics.fy * py / pz),
    )


def _prepare(landmarks, observations, intrinsics):
    by_id = {}
    for lm in landmarks:
        if lm.id in by_id:
            raise ValueError(f"duplicate landmark id {lm.id!r}")
        by_id[lm.id] = lm
    world = np.empty((len(observations), 3))
    pixels = np.empty((len(observations), 2))
    for i, obs in enumerate(observations):
        if obs.landmark_id not in by_id:
            raise KeyError(f"observation of unknown landmark {obs.landmark_id!r}")
        u, v = obs.pixel
        if not (0.0 <= u <= intrinsics.width and 0.0 <= v <= intrinsics.height):
            raise ValueError(f"observation pixel {obs.pixel} outside the sensor")
        world[i] = by_id[obs.landmark_id].position
        pixels[i] = (u, v)
    return world, pixels


def residuals_and_jacobian(
    pose: RigidTransform, world: np.ndarray, pixels: np.ndarray,
    intrinsics: CameraIntrinsics,
):
    """Stacked (2N,) residuals and (2N, 6) Jacobian of the reprojection error.

    The Jacobian is with respect to the local camera-frame twist
    (tx, ty, tz, wx, wy, wz) applied as exp(twist) o pose. Returns
    (None, None) if any point falls on or behind the camera plane.
    """
    cam = pose.apply_points(world)
    z = cam[:, 2]
    if np.any(z <= 1e-9):
        return None, None
    x, y = cam[:, 0], cam[:, 1]
    u = intrinsics.cx + intrinsics.fx * x / z
    v = intrinsics.cy + intrinsics.fy * y / z
    res = np.stack([u - pixels[:, 0], v - pixels[:, 1]], axis=1).reshape(-1)
    n = world.shape[0]
    du = np.zeros((n, 3))
    dv = np.zeros((n, 3))
    du[:, 0] = intrinsics.fx / z
    du[:, 2] = -intrinsics.fx * x / z**2
    dv[:, 1] = intrinsics.fy / z
    dv[:, 2] = -intrinsics.fy * y / z**2
    # d(cam point)/d(twist) = [ I | -[p]x ]  since dp/dw_k = e_k x p
    jac = np.zeros((2 * n, 6))
    jac[0::2, 0:3] = du
    jac[1::2, 0:3] = dv
    cross = np.zeros((n, 3, 3))  # cross[i] = -[p_i]x
    cross[:, 0, 1] = z
    cross[:, 0, 2] = -y
    cross[:, 1, 0] = -z
    cross[:, 1, 2] = x
    cross[:, 2, 0] = y
    cross[:, 2, 1] = -x
    jac[0::2, 3:6] = np.einsum("nj,njk->nk", du, cross)
    jac[1::2, 3:6] = np.einsum("nj,njk->nk", dv, cross)
    return res, jac


def _apply_twist(twist: np.ndarray, pose: RigidTransform) -> RigidTransform:
    tx, ty, tz, wx, wy, wz = (float(c) for c in twist)
    angle = math.sqrt(wx * wx + wy * wy + wz * wz)
    if angle < 1e-12:  # below any meaningful rotation; avoid a degenerate axis
        delta = RigidTransform.from_translation(tx, ty, tz)
    else:
        delta = RigidTransform.from_axis_angle(
            (wx, wy, wz), math.degrees(angle), (tx, ty, tz)
        )
    return delta.compose(pose.retagged(None, None))


def solve_pose(
    landmarks,
    observations,
    intrinsics: CameraIntrinsics,
    initial_guess: RigidTransform,
) -> TrackerEstimate:
    """Recover the world->headset pose from landmark observations.

    Levenberg-Marquardt on the squared pixel residuals: damping starts at
    1e-3, divides by 10 on accepted steps, multiplies by 10 on rejected ones;
    converges when the accepted step norm drops below 1e-10 or the cost
    change below 1e-8, within 100 iterations. Needs at least 4
    correspondences and an initial guess in the convergence basin.
    """
    if len(observations) < MIN_CORRESPONDENCES:
        raise UnderdeterminedError(
            f"{len(observations)} correspondences; need >= {MIN_CORRESPONDENCES}"
        )
    world, pixels = _prepare(landmarks, observations, intrinsics)
    pose = initial_guess.retagged(None, None)
    res, jac = residuals_and_jacobian(pose, world, pixels, intrinsics)
    if res is None:
        raise BehindCameraError("initial guess puts landmarks behind the camera")
    cost = float(res @ res)
    n_obs = len(observations)
    if cost == 0.0:
        return TrackerEstimate(
            pose.retagged(FrameId.WORLD, FrameId.TECHNICIAN), 0.0, 0, True
        )
    lam = LM_LAMBDA_INIT
    converged = False
    iteration = 0
    while iteration < LM_MAX_ITERATIONS:
        iteration += 1
        jtj = jac.T @ jac
        jtr = jac.T @ res
        try:
            step = np.linalg.solve(jtj + lam * np.eye(6), -jtr)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        candidate = _apply_twist(step, pose)
        new_res, new_jac = residuals_and_jacobian(candidate, world, pixels, intrinsics)
        new_cost = float(new_res @ new_res) if new_res is not None else math.inf
        step_norm = float(np.linalg.norm(step))
        if new_cost < cost:
            cost_drop = cost - new_cost
            pose, res, jac, cost = candidate, new_res, new_jac, new_cost
            lam = max(lam * 0.1, 1e-15)
            if step_norm < LM_STEP_TOL or cost_drop < LM_COST_TOL:
                converged = True
                break
        else:
            # A rejected step this small means the damped direction cannot
            # improve the fit any further: we are at the numerical optimum.
            if step_norm < LM_STEP_TOL:
                converged = True
                break
            lam *= 10.0
            if lam > LM_LAMBDA_MAX:
                break
    return TrackerEstimate(
        pose.retagged(FrameId.WORLD, FrameId.TECHNICIAN),
        math.sqrt(cost / n_obs),
        iteration,
        converged,
    )


# -- JSON-lines fixtures for replay tests -----------------------------------


def load_landmarks_jsonl(path) -> list[Landmark]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        out.append(Landmark(d["id"], tuple(d["position"])))
    return out


def load_observations_jsonl(path) -> list[FeatureObservation]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        out.append(FeatureObservation(d["landmark_id"], tuple(d["pixel"]), d.get("t", 0.0)))
    return out
