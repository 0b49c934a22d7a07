"""Headless scripted studies: a seeded operator model drives the session.

One study run mirrors the bench protocol: define the run's target views
(reference image + saved cloud each), retract to neutral, then restore every
view once per method arm. The unassisted arm shoots a configured number of
repositioning X-rays, halving its DOF error after each; the guided arm
iterates ICP alignment and applies the returned DOF hints without acquiring
anything until a single verification image at the end.

Everything is driven by one seeded generator and simulated clock, so repeated
runs with the same seed produce byte-identical session and run logs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .carm import CArmDofs, DOF_NAMES, DOF_RANGES, forward_kinematics
from .config import SessionConfig
from .evaluation import (
    AcquisitionEvent,
    RunLog,
    StudyScenario,
    ViewRecord,
    write_run_log,
)
from .session import (
    CommandMessage,
    SessionRecorder,
    handle_command,
    initial_state,
    update_tracker_pose,
)

# Per-DOF sigma of the operator's blind repositioning error.
_ERROR_SCALES = {
    "base_x": 70.0,
    "base_y": 70.0,
    "column_height": 40.0,
    "wheel_yaw": 6.0,
    "orbital": 5.0,
    "angular_tilt": 6.0,
    "swivel": 2.0,
}
_IMPROVEMENT = 0.45          # error retained after reading one X-ray
_GUIDANCE_ITERATIONS = 4
_HINT_GAIN = 0.9


@dataclass(frozen=True)
class RunSpec:
    run_id: int
    views: tuple[str, ...]
    conventional_xrays: tuple[int, ...]


@dataclass(frozen=True)
class StudySpec:
    runs: tuple[RunSpec, ...]
    arms: tuple[str, ...] = ("conventional", "proposed")
    exclude_runs: tuple[int, ...] = ()
    expected_xrays_per_view: float | None = None


def load_study_spec(path) -> StudySpec:
    raw = json.loads(Path(path).read_text())
    runs = []
    for r in raw["runs"]:
        views = tuple(r["views"])
        xrays = tuple(int(n) for n in r.get("conventional_xrays", [3] * len(views)))
        if len(xrays) != len(views):
            raise ValueError(
                f"run {r['run']}: {len(xrays)} xray counts for {len(views)} views"
            )
        runs.append(RunSpec(int(r["run"]), views, xrays))
    return StudySpec(
        runs=tuple(runs),
        arms=tuple(raw.get("arms", ("conventional", "proposed"))),
        exclude_runs=tuple(raw.get("exclude_runs", ())),
        expected_xrays_per_view=raw.get("expected_xrays_per_view"),
    )


def scenarios_for(spec: StudySpec, config: SessionConfig) -> list[StudyScenario]:
    out = []
    for run in spec.runs:
        presets = {v: config.presets[v] for v in run.views}
        for arm in spec.arms:
            out.append(StudyScenario(run.run_id, run.views, arm, presets))
    return out


@dataclass
class _Driver:
    """Sequences commands through the pure session core with a scripted clock."""

    config: SessionConfig
    recorder: SessionRecorder | None = None
    state: object = None
    clock: float = 0.0
    request_counter: int = 0

    def __post_init__(self):
        self.state = initial_state(self.config)

    def send(self, verb: str, **args) -> dict:
        self.clock += 1.0
        self.request_counter += 1
        cmd = CommandMessage(
            verb=verb, args=args, client_id="simulator",
            request_id=f"sim-{self.request_counter}",
        )
        if self.recorder is not None:
            self.recorder.record_command(self.clock, cmd)
        self.state, reply, _events = handle_command(self.state, cmd, self.clock)
        if not reply["ok"]:
            raise RuntimeError(f"simulated command {verb} failed: {reply['error']}")
        return reply["data"]

    def move_operator(self, pose) -> None:
        self.clock += 1.0
        if self.recorder is not None:
            self.recorder.record_pose(self.clock, pose)
        self.state = update_tracker_pose(self.state, pose, self.clock)


def _perturbation(rng: np.random.Generator) -> dict[str, float]:
    return {name: float(rng.normal(0.0, _ERROR_SCALES[name])) for name in DOF_NAMES}


def _offset_dofs(preset: CArmDofs, offsets: dict[str, float], scale: float) -> CArmDofs:
    values = {}
    for name in DOF_NAMES:
        v = getattr(preset, name) + scale * offsets[name]
        if name in DOF_RANGES:
            lo, hi = DOF_RANGES[name]
            v = min(hi, max(lo, v))
        values[name] = v
    return CArmDofs(**values)


def _wandered_pose(config: SessionConfig, rng: np.random.Generator):
    base = config.initial_tracker_pose
    from .geometry import RigidTransform

    jitter = RigidTransform.from_axis_angle(
        rng.normal(size=3), float(rng.normal(0.0, 2.0)),
        tuple(rng.normal(0.0, 50.0, size=3)),
    )
    return jitter.compose(base.retagged(None, None))


def simulate_study(
    spec: StudySpec,
    config: SessionConfig,
    seed: int,
    session_log_path=None,
) -> tuple[RunLog, object]:
    """Execute the scripted study; returns (run log, terminal session state)."""
    rng = np.random.default_rng(seed)
    recorder = SessionRecorder(session_log_path) if session_log_path else None
    try:
        driver = _Driver(config, recorder)
        records = []
        for run in spec.runs:
            targets = {}
            references = {}
            # Define this run's targets: preset, reference image, saved cloud.
            for view in run.views:
                session_name = f"run{run.run_id}:{view}"
                driver.send("set_dofs", preset=view)
                data = driver.send("acquire_xray", view=session_name, purpose="reference")
                references[view] = {k: tuple(v) for k, v in data["keypoints"].items()}
                driver.send("save_view", name=session_name)
                targets[view] = forward_kinematics(
                    driver.state.dofs, config.geometry
                ).gantry
            driver.send("reset_neutral")
            for arm in spec.arms:
                driver.move_operator(_wandered_pose(config, rng))
                for view, n_xrays in zip(run.views, run.conventional_xrays):
                    session_name = f"run{run.run_id}:{view}"
                    preset = config.presets[view]
                    offsets = _perturbation(rng)
                    acquisitions = []
                    if arm == "conventional":
                        scale = 1.0
                        for _ in range(n_xrays):
                            driver.send("set_dofs", **vars_of(_offset_dofs(preset, offsets, scale)))
                            data = driver.send(
                                "acquire_xray", view=session_name, purpose="repositioning"
                            )
                            acquisitions.append(
                                AcquisitionEvent(
                                    driver.clock,
                                    "repositioning",
                                    {k: tuple(v) for k, v in data["keypoints"].items()},
                                )
                            )
                            scale *= _IMPROVEMENT
                        # Final correction after reading the last image.
                        driver.send("set_dofs", **vars_of(_offset_dofs(preset, offsets, scale)))
                    else:
                        driver.send("set_dofs", **vars_of(_offset_dofs(preset, offsets, 1.0)))
                        driver.send("show_view", name=session_name)
                        for _ in range(_GUIDANCE_ITERATIONS):
                            report = driver.send("request_alignment", view=session_name)
                            hints = report.get("dof_hints")
                            if not hints or not hints["reliable"]:
                                break
                            increments = {
                                k: _HINT_GAIN * v for k, v in hints["increments"].items()
                            }
                            driver.send(
                                "set_dofs",
                                **vars_of(driver.state.dofs.adjusted(increments, clamp=True)),
                            )
                        driver.send("hide_view")
                        data = driver.send(
                            "acquire_xray", view=session_name, purpose="verification"
                        )
                        acquisitions.append(
                            AcquisitionEvent(
                                driver.clock,
                                "verification",
                                {k: tuple(v) for k, v in data["keypoints"].items()},
                            )
                        )
                    final_pose = forward_kinematics(
                        driver.state.dofs, config.geometry
                    ).gantry
                    records.append(
                        ViewRecord(
                            run_id=run.run_id,
                            view=view,
                            arm=arm,
                            target_pose=targets[view],
                            final_pose=final_pose,
                            acquisitions=tuple(acquisitions),
                            reference_keypoints=references[view],
                        )
                    )
                driver.send("reset_neutral")
        return RunLog(tuple(records)), driver.state
    finally:
        if recorder is not None:
            recorder.close()


def vars_of(dofs: CArmDofs) -> dict[str, float]:
    return {name: getattr(dofs, name) for name in DOF_NAMES}


def run_headless(scenario_path, config: SessionConfig, seed: int, out_dir) -> dict:
    """CLI entry: simulate, write session+run logs, return output paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = load_study_spec(scenario_path)
    session_log = out / "session_log.jsonl"
    run_log_path = out / "run_log.jsonl"
    run_log, _state = simulate_study(spec, config, seed, session_log)
    write_run_log(run_log, run_log_path)
    return {"session_log": str(session_log), "run_log": str(run_log_path)}
