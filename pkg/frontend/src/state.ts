/** Pure scene/panel state and the snapshot reducer.
 *
 * applySnapshot drops anything with a sequence number at or below the last
 * applied one (idempotent per sequence, stale broadcasts ignored) and leaves
 * both states untouched on malformed input.
 */

import { LAYER_COLORS } from "./colors.js";
import { classifyAlignment, type Band } from "./banding.js";
import {
  DOF_NAMES,
  isSnapshot,
  type AlignmentInfo,
  type DofName,
  type Matrix4,
  type Point3,
  type Snapshot,
} from "./protocol.js";

export interface CloudLayer {
  color: string;
  points: Point3[];
  visible: boolean;
}

export interface SceneState {
  lastSequence: number;
  live: CloudLayer;
  saved: CloudLayer;
  gantryPose: Matrix4 | null;
  sourcePose: Matrix4 | null;
  detectorPose: Matrix4 | null;
  trackerPose: Matrix4 | null;
  dofs: Record<DofName, number>;
}

export interface AlignmentDisplay {
  distanceMm: number;
  angleDeg: number;
  rmsMm: number;
  band: Band;
  converged: boolean;
  hints: Record<string, number> | null;
}

export interface PanelState {
  connected: boolean;
  sliders: Record<DofName, number>;
  ranges: Record<string, [number, number]>;
  savedViews: string[];
  shownView: string | null;
  liveVisible: boolean;
  xrayCounts: Record<string, number>;
  alignment: AlignmentDisplay | null;
  log: string[];
}

const ZERO_DOFS = Object.fromEntries(DOF_NAMES.map((n) => [n, 0])) as Record<
  DofName,
  number
>;

export function createScene(): SceneState {
  return {
    lastSequence: -1,
    live: { color: LAYER_COLORS.live, points: [], visible: true },
    saved: { color: LAYER_COLORS.saved, points: [], visible: false },
    gantryPose: null,
    sourcePose: null,
    detectorPose: null,
    trackerPose: null,
    dofs: { ...ZERO_DOFS },
  };
}

export function createPanel(): PanelState {
  return {
    connected: false,
    sliders: { ...ZERO_DOFS },
    ranges: {},
    savedViews: [],
    shownView: null,
    liveVisible: true,
    xrayCounts: {},
    alignment: null,
    log: [],
  };
}

export function clampToRange(
  ranges: Record<string, [number, number]>,
  dof: string,
  value: number,
): number {
  const range = ranges[dof];
  if (!range) return value;
  return Math.min(range[1], Math.max(range[0], value));
}

function alignmentDisplay(info: AlignmentInfo, snap: Snapshot): AlignmentDisplay {
  const band =
    (info.banding as Band | undefined) ??
    classifyAlignment(info.distance_mm, info.angle_deg, snap.banding_thresholds);
  return {
    distanceMm: info.distance_mm,
    angleDeg: info.angle_deg,
    rmsMm: info.rms_mm,
    band,
    converged: info.converged,
    hints: info.dof_hints && info.dof_hints.reliable ? info.dof_hints.increments : null,
  };
}

export interface ApplyResult {
  scene: SceneState;
  panel: PanelState;
  applied: boolean;
}

export function applySnapshot(
  scene: SceneState,
  panel: PanelState,
  message: unknown,
  warn: (text: string) => void = () => {},
): ApplyResult {
  if (!isSnapshot(message)) {
    warn("malformed snapshot dropped");
    return { scene, panel, applied: false };
  }
  const snap = message;
  if (snap.sequence <= scene.lastSequence) {
    return { scene, panel, applied: false };
  }
  const nextScene: SceneState = {
    lastSequence: snap.sequence,
    live: {
      color: LAYER_COLORS.live, // color semantics never vary
      points: snap.live_cloud ?? [],
      visible: snap.live_visible && snap.live_cloud !== null,
    },
    saved: {
      color: LAYER_COLORS.saved,
      points: snap.shown_cloud ?? [],
      visible: snap.shown_cloud !== null,
    },
    gantryPose: snap.gantry_pose,
    sourcePose: snap.source_pose,
    detectorPose: snap.detector_pose,
    trackerPose: snap.tracker_pose,
    dofs: { ...snap.dofs },
  };
  const nextPanel: PanelState = {
    ...panel,
    sliders: { ...snap.dofs },
    ranges: snap.dof_ranges,
    savedViews: [...snap.saved_views],
    shownView: snap.shown_view,
    liveVisible: snap.live_visible,
    xrayCounts: { ...snap.xray_counts },
    alignment: snap.alignment ? alignmentDisplay(snap.alignment, snap) : panel.alignment,
  };
  return { scene: nextScene, panel: nextPanel, applied: true };
}

export function setConnected(panel: PanelState, connected: boolean): PanelState {
  return { ...panel, connected };
}

export function appendLog(panel: PanelState, line: string, limit = 200): PanelState {
  const log = [...panel.log, line];
  return { ...panel, log: log.slice(-limit) };
}
