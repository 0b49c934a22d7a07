"""Study metrics: pose-difference statistics, projection-domain keypoint
displacement, and acquisition bookkeeping over recorded runs.

A run log is a flat sequence of per-view records, each holding the target and
final device poses plus the X-ray acquisition events of that view. X-ray
counts are dose bookkeeping and therefore count *repositioning* images only;
reference images (taken while defining a target) and the single verification
image of the guided arm are tagged separately and excluded from the count.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass
from pathlib import Path

from .geometry import RigidTransform, pose_delta, transform_from_json, transform_to_json

ARMS = ("conventional", "proposed")
PURPOSES = ("reference", "repositioning", "verification")

# Keypoint sets are plain id -> pixel maps; 3-4 entries is typical since
# markers fall out of the field of view depending on the device pose.
KeypointSet = dict[str, tuple[float, float]]


class StudyMismatchError(ValueError):
    """A log entry does not fit the scenario it is evaluated against."""


@dataclass(frozen=True)
class StudyScenario:
    """One run of one method arm over an ordered list of target views."""

    run_id: int
    views: tuple[str, ...]
    arm: str
    presets: dict[str, object]  # view label -> CArmDofs

    def __post_init__(self):
        if self.arm not in ARMS:
            raise ValueError(f"arm must be one of {ARMS}, got {self.arm!r}")
        if len(self.views) < 1:
            raise ValueError("a scenario needs at least one target view")
        object.__setattr__(self, "views", tuple(self.views))
        missing = [v for v in self.views if v not in self.presets]
        if missing:
            raise ValueError(f"views without DOF presets: {missing}")


@dataclass(frozen=True)
class AcquisitionEvent:
    t: float
    purpose: str
    keypoints: dict[str, tuple[float, float]]

    def __post_init__(self):
        if self.purpose not in PURPOSES:
            raise ValueError(f"purpose must be one of {PURPOSES}, got {self.purpose!r}")
        object.__setattr__(
            self, "keypoints", {k: (float(u), float(v)) for k, (u, v) in self.keypoints.items()}
        )


@dataclass(frozen=True)
class ViewRecord:
    """Everything recorded while restoring one view with one method."""

    run_id: int
    view: str
    arm: str
    target_pose: RigidTransform
    final_pose: RigidTransform
    acquisitions: tuple[AcquisitionEvent, ...] = ()
    reference_keypoints: dict[str, tuple[float, float]] | None = None

    def __post_init__(self):
        object.__setattr__(self, "acquisitions", tuple(self.acquisitions))
        times = [a.t for a in self.acquisitions]
        if times != sorted(times):
            raise ValueError(f"acquisitions of view {self.view!r} are not in time order")

    def repositioning(self) -> list[AcquisitionEvent]:
        return [a for a in self.acquisitions if a.purpose == "repositioning"]

    def verification(self) -> AcquisitionEvent | None:
        hits = [a for a in self.acquisitions if a.purpose == "verification"]
        return hits[-1] if hits else None


@dataclass(frozen=True)
class RunLog:
    records: tuple[ViewRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))


@dataclass(frozen=True)
class PoseErrorStats:
    """Mean and sample (n-1) SD of pose differences."""

    mean_distance: float
    sd_distance: float
    mean_angle: float
    sd_angle: float
    n: int

    def __post_init__(self):
        if self.sd_distance < 0.0 or self.sd_angle < 0.0:
            raise ValueError("SD must be >= 0")


def _mean_sd(values) -> tuple[float, float]:
    if len(values) == 1:
        return float(values[0]), 0.0
    return float(statistics.fmean(values)), float(statistics.stdev(values))


def pose_error_stats(pairs) -> PoseErrorStats:
    """Mean +/- sample SD of pose_delta over (final, target) transform pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("pose_error_stats needs at least one pose pair")
    deltas = [pose_delta(final, target) for final, target in pairs]
    dists = [d.distance for d in deltas]
    angles = [d.angle for d in deltas]
    md, sd = _mean_sd(dists)
    ma, sa = _mean_sd(angles)
    return PoseErrorStats(md, sd, ma, sa, len(pairs))


def keypoint_displacement(a: dict, b: dict) -> float:
    """Mean Euclidean pixel distance over the keypoint ids present in both."""
    shared = sorted(set(a) & set(b))
    if not shared:
        raise ValueError("keypoint sets share no ids")
    return float(
        statistics.fmean(math.hypot(a[k][0] - b[k][0], a[k][1] - b[k][1]) for k in shared)
    )


def _displacement_or_none(a: dict, b: dict) -> float | None:
    """Marker count varies with the field of view; images that share no
    markers with the reference simply contribute no displacement value."""
    return keypoint_displacement(a, b) if set(a) & set(b) else None


# -- study roll-up -----------------------------------------------------------


@dataclass(frozen=True)
class ViewRow:
    run_id: int
    view: str
    arm: str
    dist_mm: float
    angle_deg: float
    first_try_px: float | None
    final_px: float | None
    xray_count: int


@dataclass(frozen=True)
class ArmSummary:
    arm: str
    pose_stats: PoseErrorStats
    mean_first_try_px: float | None
    mean_final_px: float | None
    total_xrays: int
    views: int
    xrays_per_view: float


@dataclass(frozen=True)
class StudyReport:
    rows: tuple[ViewRow, ...]
    arms: dict[str, ArmSummary]
    excluded_runs: tuple[int, ...]
    expected_xrays_per_view: float | None = None

    def summary_dict(self) -> dict:
        out = {
            "excluded_runs": list(self.excluded_runs),
            "arms": {},
        }
        for arm, s in sorted(self.arms.items()):
            entry = {
                "views": s.views,
                "total_xrays": s.total_xrays,
                "xrays_per_view": s.xrays_per_view,
                "mean_distance_mm": s.pose_stats.mean_distance,
                "sd_distance_mm": s.pose_stats.sd_distance,
                "mean_angle_deg": s.pose_stats.mean_angle,
                "sd_angle_deg": s.pose_stats.sd_angle,
                "mean_first_try_px": s.mean_first_try_px,
                "mean_final_px": s.mean_final_px,
            }
            if arm == "conventional" and self.expected_xrays_per_view is not None:
                entry["expected_xrays_per_view"] = self.expected_xrays_per_view
                entry["xrays_per_view_matches_expected"] = (
                    abs(s.xrays_per_view - self.expected_xrays_per_view) < 5e-3
                )
            out["arms"][arm] = entry
        out["ground_truth_source"] = "simulator state (exact)"
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["run", "view", "arm", "dist_mm", "angle_deg",
                 "first_try_px", "final_px", "xray_count"]
            )
            for r in self.rows:
                w.writerow(
                    [
                        r.run_id,
                        r.view,
                        r.arm,
                        repr(r.dist_mm),
                        repr(r.angle_deg),
                        "" if r.first_try_px is None else repr(r.first_try_px),
                        "" if r.final_px is None else repr(r.final_px),
                        r.xray_count,
                    ]
                )

    def write_json(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.summary_dict(), sort_keys=True, indent=2) + "\n"
        )


def run_study(
    scenarios,
    log: RunLog,
    exclude_runs=(),
    expected_xrays_per_view: float | None = None,
) -> StudyReport:
    """Roll a run log up into per-view rows and per-arm statistics.

    `scenarios` is one StudyScenario or a sequence covering the logged
    (run, arm) combinations. Records from `exclude_runs` are dropped before
    any statistic is computed, so exclusion cannot bias the remaining runs.
    """
    if isinstance(scenarios, StudyScenario):
        scenarios = [scenarios]
    by_key = {(s.run_id, s.arm): s for s in scenarios}
    exclude = set(exclude_runs)
    rows = []
    per_arm_records: dict[str, list[ViewRecord]] = {}
    for rec in log.records:
        scenario = by_key.get((rec.run_id, rec.arm))
        if scenario is None:
            raise StudyMismatchError(
                f"record for run {rec.run_id} arm {rec.arm!r} has no scenario"
            )
        if rec.view not in scenario.views:
            raise StudyMismatchError(
                f"view {rec.view!r} is not a target of run {rec.run_id} ({scenario.views})"
            )
        if rec.run_id in exclude:
            continue
        d = pose_delta(rec.final_pose, rec.target_pose)
        first_px = final_px = None
        if rec.reference_keypoints:
            if rec.arm == "conventional":
                repo = rec.repositioning()
                if repo:
                    first_px = _displacement_or_none(
                        repo[0].keypoints, rec.reference_keypoints
                    )
                    final_px = _displacement_or_none(
                        repo[-1].keypoints, rec.reference_keypoints
                    )
            else:
                ver = rec.verification()
                if ver is not None:
                    first_px = final_px = _displacement_or_none(
                        ver.keypoints, rec.reference_keypoints
                    )
        rows.append(
            ViewRow(
                run_id=rec.run_id,
                view=rec.view,
                arm=rec.arm,
                dist_mm=d.distance,
                angle_deg=d.angle,
                first_try_px=first_px,
                final_px=final_px,
                xray_count=len(rec.repositioning()),
            )
        )
        per_arm_records.setdefault(rec.arm, []).append(rec)

    arms = {}
    for arm, recs in per_arm_records.items():
        stats = pose_error_stats([(r.final_pose, r.target_pose) for r in recs])
        arm_rows = [r for r in rows if r.arm == arm]
        firsts = [r.first_try_px for r in arm_rows if r.first_try_px is not None]
        finals = [r.final_px for r in arm_rows if r.final_px is not None]
        total = sum(r.xray_count for r in arm_rows)
        arms[arm] = ArmSummary(
            arm=arm,
            pose_stats=stats,
            mean_first_try_px=float(statistics.fmean(firsts)) if firsts else None,
            mean_final_px=float(statistics.fmean(finals)) if finals else None,
            total_xrays=total,
            views=len(arm_rows),
            xrays_per_view=total / len(arm_rows) if arm_rows else 0.0,
        )
    return StudyReport(
        rows=tuple(rows),
        arms=arms,
        excluded_runs=tuple(sorted(exclude)),
        expected_xrays_per_view=expected_xrays_per_view,
    )


# -- JSON-lines round trip ----------------------------------------------------


def _record_to_dict(rec: ViewRecord) -> dict:
    return {
        "run": rec.run_id,
        "view": rec.view,
        "arm": rec.arm,
        "target_pose": transform_to_json(rec.target_pose),
        "final_pose": transform_to_json(rec.final_pose),
        "acquisitions": [
            {"t": a.t, "purpose": a.purpose,
             "keypoints": {k: list(v) for k, v in a.keypoints.items()}}
            for a in rec.acquisitions
        ],
        "reference_keypoints": (
            {k: list(v) for k, v in rec.reference_keypoints.items()}
            if rec.reference_keypoints
            else None
        ),
    }


def _record_from_dict(d: dict) -> ViewRecord:
    ref = d.get("reference_keypoints")
    return ViewRecord(
        run_id=int(d["run"]),
        view=d["view"],
        arm=d["arm"],
        target_pose=transform_from_json(d["target_pose"]),
        final_pose=transform_from_json(d["final_pose"]),
        acquisitions=tuple(
            AcquisitionEvent(a["t"], a["purpose"],
                             {k: tuple(v) for k, v in a["keypoints"].items()})
            for a in d["acquisitions"]
        ),
        reference_keypoints={k: tuple(v) for k, v in ref.items()} if ref else None,
    )


def write_run_log(log: RunLog, path) -> None:
    with open(path, "w") as fh:
        for rec in log.records:
            fh.write(json.dumps(_record_to_dict(rec), sort_keys=True) + "\n")


def read_run_log(path) -> RunLog:
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(_record_from_dict(json.loads(line)))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed run-log entry: {exc}") from exc
    return RunLog(tuple(records))
