"""Session engine: an event-sourced state machine over the simulation.

All mutation goes through two pure transition functions, `handle_command`
(operator intent) and `update_tracker_pose` (headset motion as a sensor input
event, deliberately not a command verb). States are immutable; the sequence
number strictly increases with every applied mutation, and rejected commands
leave the state untouched. Because transitions are pure and every source of
randomness is seeded from the config, replaying a recorded event stream
reproduces the terminal state bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .carm import (
    CArmDofs,
    DOF_NAMES,
    DOF_RANGES,
    DofRangeError,
    forward_kinematics,
    project_keypoints,
    sample_surface,
)
from .config import SessionConfig
from .depth import sense_points
from .geometry import FrameId, RigidTransform, TaggedPointCloud, transform_to_json
from .icp import AlignmentReport, InsufficientOverlapError, icp_align, with_dof_hints
from .registry import UnknownViewError, ViewRegistry, save_view

VERBS = (
    "save_view",
    "show_view",
    "hide_view",
    "toggle_live",
    "set_dofs",
    "adjust_dof",
    "acquire_xray",
    "request_alignment",
    "reset_neutral",
)


class CommandError(ValueError):
    """Command rejected; the session state is unchanged."""


class ReplayError(ValueError):
    """A recorded log could not be replayed; message cites the line number."""


@dataclass(frozen=True)
class CommandMessage:
    verb: str
    args: dict = field(default_factory=dict)
    client_id: str = "local"
    request_id: str = ""

    def __post_init__(self):
        if self.verb not in VERBS:
            raise CommandError(f"unknown verb {self.verb!r}")
        if not isinstance(self.args, dict):
            raise CommandError("args must be an object")


@dataclass(frozen=True)
class XrayEvent:
    t: float
    view: str
    purpose: str
    keypoints: dict[str, tuple[float, float]]


@dataclass(frozen=True)
class SessionState:
    config: SessionConfig
    sequence: int
    time: float
    dofs: CArmDofs
    tracker_pose: RigidTransform
    registry: ViewRegistry
    shown_view: str | None
    live_visible: bool
    latest_alignment: AlignmentReport | None
    xray_events: tuple[XrayEvent, ...]
    last_events: tuple[dict, ...] = ()

    def xray_count(self, view: str) -> int:
        return sum(1 for e in self.xray_events if e.view == view)


def initial_state(config: SessionConfig) -> SessionState:
    return SessionState(
        config=config,
        sequence=0,
        time=0.0,
        dofs=config.presets.get("neutral", CArmDofs()),
        tracker_pose=config.initial_tracker_pose,
        registry=ViewRegistry(),
        shown_view=None,
        live_visible=True,
        latest_alignment=None,
        xray_events=(),
    )


def live_world_cloud(state: SessionState, timestamp: float | None = None) -> TaggedPointCloud:
    """Current device surface cloud; a pure function of (dofs, config seed)."""
    return sample_surface(
        state.dofs,
        state.config.geometry,
        state.config.sample_density_per_m2,
        state.config.seed,
        timestamp=state.time if timestamp is None else timestamp,
    )


def _bump(state: SessionState, t: float, events: tuple[dict, ...], **changes) -> SessionState:
    return replace(
        state, sequence=state.sequence + 1, time=t, last_events=events, **changes
    )


def handle_command(
    state: SessionState, cmd: CommandMessage, t: float
) -> tuple[SessionState, dict, list[dict]]:
    """Apply one command at time `t`; returns (state', reply, broadcast events).

    The transition is atomic: any validation failure produces an error reply
    and returns the input state unchanged.
    """
    try:
        new_state, data, events = _apply(state, cmd, float(t))
    except (CommandError, DofRangeError, UnknownViewError, InsufficientOverlapError,
            ValueError) as exc:
        reply = {
            "type": "reply",
            "request_id": cmd.request_id,
            "ok": False,
            "error": str(exc),
        }
        return state, reply, []
    reply = {"type": "reply", "request_id": cmd.request_id, "ok": True, "data": data}
    return new_state, reply, events


def _require(args: dict, key: str):
    if key not in args:
        raise CommandError(f"missing argument {key!r}")
    return args[key]


def _apply(state: SessionState, cmd: CommandMessage, t: float):
    cfg = state.config
    verb = cmd.verb
    args = cmd.args
    if verb == "reset_neutral":
        dofs = cfg.presets.get("neutral", CArmDofs())
        events = ({"event": "dofs", "sequence": state.sequence + 1},)
        return _bump(state, t, events, dofs=dofs), {"dofs": _dofs_dict(dofs)}, list(events)

    if verb == "set_dofs":
        if "preset" in args:
            name = args["preset"]
            if name not in cfg.presets:
                raise CommandError(f"unknown preset {name!r}")
            dofs = cfg.presets[name]
        else:
            unknown = set(args) - set(DOF_NAMES)
            if unknown:
                raise CommandError(f"unknown DOF fields {sorted(unknown)}")
            dofs = replace(state.dofs, **{k: float(v) for k, v in args.items()})
        events = ({"event": "dofs", "sequence": state.sequence + 1},)
        return _bump(state, t, events, dofs=dofs), {"dofs": _dofs_dict(dofs)}, list(events)

    if verb == "adjust_dof":
        name = _require(args, "name")
        delta = float(_require(args, "delta"))
        dofs = state.dofs.adjusted({name: delta})
        events = ({"event": "dofs", "sequence": state.sequence + 1},)
        return _bump(state, t, events, dofs=dofs), {"dofs": _dofs_dict(dofs)}, list(events)

    if verb == "toggle_live":
        visible = not state.live_visible
        events = ({"event": "live_toggled", "visible": visible},)
        return _bump(state, t, events, live_visible=visible), {"visible": visible}, list(events)

    if verb == "save_view":
        name = _require(args, "name")
        if not isinstance(name, str) or not name:
            raise CommandError("view name must be a non-empty string")
        world = live_world_cloud(state, timestamp=t)
        sensor = sense_points(world, state.tracker_pose, cfg.ir_extrinsic)
        keypoints = project_keypoints(cfg.keypoints, state.dofs, cfg.geometry)
        view = save_view(
            name, sensor, state.tracker_pose, cfg.ir_extrinsic, t,
            reference_keypoints=keypoints,
        )
        replaced = name in state.registry
        events = ({"event": "view_saved", "name": name, "replaced": replaced},)
        return (
            _bump(state, t, events, registry=state.registry.add(view)),
            {"name": name, "points": len(view.world_cloud), "replaced": replaced},
            list(events),
        )

    if verb == "show_view":
        name = _require(args, "name")
        state.registry.get(name)  # raises UnknownViewError before mutating
        events = ({"event": "view_shown", "name": name},)
        return _bump(state, t, events, shown_view=name), {"name": name}, list(events)

    if verb == "hide_view":
        events = ({"event": "view_hidden"},)
        return _bump(state, t, events, shown_view=None), {}, list(events)

    if verb == "acquire_xray":
        view = _require(args, "view")
        if not isinstance(view, str) or not view:
            raise CommandError("acquire_xray needs a view label")
        purpose = args.get("purpose", "repositioning")
        if purpose not in ("reference", "repositioning", "verification"):
            raise CommandError(f"bad acquisition purpose {purpose!r}")
        keypoints = project_keypoints(cfg.keypoints, state.dofs, cfg.geometry)
        event = XrayEvent(t, view, purpose, keypoints)
        events = (
            {"event": "xray", "view": view, "purpose": purpose,
             "count": state.xray_count(view) + 1},
        )
        return (
            _bump(state, t, events, xray_events=state.xray_events + (event,)),
            {"view": view, "keypoints": {k: list(v) for k, v in keypoints.items()},
             "count": state.xray_count(view) + 1},
            list(events),
        )

    if verb == "request_alignment":
        name = args.get("view", state.shown_view)
        if name is None:
            raise CommandError("no view shown and none named")
        saved = state.registry.get(name)
        live = live_world_cloud(state, timestamp=t)
        report = icp_align(live, saved.world_cloud, cfg.icp)
        report = with_dof_hints(report, state.dofs, cfg.geometry)
        events = ({"event": "alignment", "view": name, "rms": report.rms},)
        return (
            _bump(state, t, events, latest_alignment=report),
            report.to_dict(),
            list(events),
        )

    raise CommandError(f"unhandled verb {verb!r}")


def update_tracker_pose(
    state: SessionState, pose: RigidTransform, t: float
) -> SessionState:
    """Apply a headset pose update (sensor input, not an operator command)."""
    tagged = pose.retagged(FrameId.WORLD, FrameId.TECHNICIAN)
    events = ({"event": "tracker_pose"},)
    return _bump(state, float(t), events, tracker_pose=tagged)


def _dofs_dict(dofs: CArmDofs) -> dict:
    return {name: getattr(dofs, name) for name in DOF_NAMES}


def _decimate(points: np.ndarray, max_points: int) -> np.ndarray:
    n = points.shape[0]
    if n <= max_points:
        return points
    stride = math.ceil(n / max_points)
    return points[::stride]


def snapshot(state: SessionState) -> dict:
    """A consistent, transport-ready view of the state (clouds decimated)."""
    cfg = state.config
    fk = forward_kinematics(state.dofs, cfg.geometry)
    live = None
    if state.live_visible:
        cloud = live_world_cloud(state)
        live = _decimate(cloud.points, cfg.snapshot_max_points).tolist()
    shown = None
    if state.shown_view is not None:
        view = state.registry.get(state.shown_view)
        shown = _decimate(view.world_cloud.points, cfg.snapshot_max_points).tolist()
    alignment = state.latest_alignment.to_dict() if state.latest_alignment else None
    if alignment is not None:
        alignment["banding"] = cfg.banding.classify(
            alignment["distance_mm"], alignment["angle_deg"]
        )
    return {
        "type": "snapshot",
        "sequence": state.sequence,
        "time": state.time,
        "dofs": _dofs_dict(state.dofs),
        "dof_ranges": {k: list(v) for k, v in DOF_RANGES.items()},
        "tracker_pose": transform_to_json(state.tracker_pose),
        "gantry_pose": transform_to_json(fk.gantry),
        "source_pose": transform_to_json(fk.source),
        "detector_pose": transform_to_json(fk.detector),
        "live_visible": state.live_visible,
        "live_cloud": live,
        "shown_view": state.shown_view,
        "shown_cloud": shown,
        "saved_views": state.registry.names(),
        "xray_counts": {
            v: state.xray_count(v) for v in sorted({e.view for e in state.xray_events})
        },
        "alignment": alignment,
        "banding_thresholds": {
            "good_mm": cfg.banding.good_mm,
            "good_deg": cfg.banding.good_deg,
            "warn_mm": cfg.banding.warn_mm,
            "warn_deg": cfg.banding.warn_deg,
        },
        "events": list(state.last_events),
    }


# -- event-stream recording and replay ---------------------------------------


class SessionRecorder:
    """Append-only JSONL writer for the session's input event stream."""

    def __init__(self, path):
        self._fh = open(path, "w")

    def record_command(self, t: float, cmd: CommandMessage) -> None:
        self._fh.write(
            json.dumps(
                {
                    "kind": "cmd",
                    "t": t,
                    "verb": cmd.verb,
                    "args": cmd.args,
                    "client_id": cmd.client_id,
                    "request_id": cmd.request_id,
                },
                sort_keys=True,
            )
            + "\n"
        )

    def record_pose(self, t: float, pose: RigidTransform) -> None:
        self._fh.write(
            json.dumps(
                {
                    "kind": "pose",
                    "t": t,
                    "quaternion": list(pose.rotation),
                    "translation": list(pose.translation),
                },
                sort_keys=True,
            )
            + "\n"
        )

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def replay_log(path, config: SessionConfig) -> SessionState:
    """Fold a recorded event stream into its terminal state."""
    state = initial_state(config)
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            kind = entry["kind"]
            if kind == "cmd":
                cmd = CommandMessage(
                    verb=entry["verb"],
                    args=entry["args"],
                    client_id=entry.get("client_id", "replay"),
                    request_id=entry.get("request_id", ""),
                )
                state, _reply, _events = handle_command(state, cmd, entry["t"])
            elif kind == "pose":
                pose = RigidTransform(
                    tuple(entry["quaternion"]), tuple(entry["translation"])
                )
                state = update_tracker_pose(state, pose, entry["t"])
            else:
                raise ValueError(f"unknown entry kind {kind!r}")
        except ReplayError:
            raise
        except (KeyError, TypeError, ValueError, CommandError) as exc:
            raise ReplayError(f"{path}:{lineno}: {exc}") from exc
    return state
