/** Wire types of the session-service WebSocket protocol. */

export type DofName =
  | "base_x"
  | "base_y"
  | "column_height"
  | "wheel_yaw"
  | "orbital"
  | "angular_tilt"
  | "swivel";

export const DOF_NAMES: DofName[] = [
  "base_x",
  "base_y",
  "column_height",
  "wheel_yaw",
  "orbital",
  "angular_tilt",
  "swivel",
];

export type Verb =
  | "save_view"
  | "show_view"
  | "hide_view"
  | "toggle_live"
  | "set_dofs"
  | "adjust_dof"
  | "acquire_xray"
  | "request_alignment"
  | "reset_neutral";

export interface CommandMessage {
  type: "cmd";
  verb: Verb;
  args: Record<string, unknown>;
  request_id: string;
}

export interface Reply {
  type: "reply";
  request_id: string;
  ok: boolean;
  data?: Record<string, unknown>;
  error?: string;
}

export type Matrix4 = number[][];
export type Point3 = [number, number, number];

export interface AlignmentInfo {
  distance_mm: number;
  angle_deg: number;
  rms_mm: number;
  iterations: number;
  converged: boolean;
  correspondences: number;
  banding?: string;
  dof_hints: { increments: Record<string, number>; reliable: boolean } | null;
}

export interface Snapshot {
  type: "snapshot";
  sequence: number;
  time: number;
  dofs: Record<DofName, number>;
  dof_ranges: Record<string, [number, number]>;
  tracker_pose: Matrix4;
  gantry_pose: Matrix4;
  source_pose: Matrix4;
  detector_pose: Matrix4;
  live_visible: boolean;
  live_cloud: Point3[] | null;
  shown_view: string | null;
  shown_cloud: Point3[] | null;
  saved_views: string[];
  xray_counts: Record<string, number>;
  alignment: AlignmentInfo | null;
  banding_thresholds: {
    good_mm: number;
    good_deg: number;
    warn_mm: number;
    warn_deg: number;
  };
  events: Array<Record<string, unknown>>;
}

export type ServerMessage = Reply | Snapshot;

export function isSnapshot(msg: unknown): msg is Snapshot {
  const m = msg as Record<string, unknown> | null;
  return (
    !!m &&
    m["type"] === "snapshot" &&
    typeof m["sequence"] === "number" &&
    typeof m["dofs"] === "object" &&
    m["dofs"] !== null
  );
}

export function isReply(msg: unknown): msg is Reply {
  const m = msg as Record<string, unknown> | null;
  return !!m && m["type"] === "reply" && typeof m["request_id"] === "string";
}
