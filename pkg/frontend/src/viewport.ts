/** Canvas point-cloud viewport: orbit camera, perspective projection, and
 * layer-aware hit testing. World units are millimeters, +z up.
 *
 * The camera math is deliberately dependency-free: an orbit camera is a
 * yaw/pitch/distance triple around a target; the optional technician POV
 * locks the view matrix to the tracker pose from the snapshot instead.
 */

import type { Matrix4, Point3 } from "./protocol.js";
import type { SceneState, CloudLayer } from "./state.js";

export interface OrbitCamera {
  mode: "orbit";
  target: Point3;
  yawDeg: number;
  pitchDeg: number;
  distance: number;
}

export interface PovCamera {
  mode: "pov"; // locked to the technician tracker pose
}

export type Camera = OrbitCamera | PovCamera;

export interface ProjectedPoint {
  x: number;
  y: number;
  depth: number;
}

export const DEFAULT_CAMERA: OrbitCamera = {
  mode: "orbit",
  target: [0, 0, 0],
  yawDeg: -30,
  pitchDeg: 20,
  distance: 4500,
};

const DEG = Math.PI / 180;

/** World -> camera rotation+translation for an orbit camera: the camera sits
 * on a sphere around the target, looking at it, +x right, +y down on screen. */
export function orbitViewMatrix(cam: OrbitCamera): Matrix4 {
  const cy = Math.cos(cam.yawDeg * DEG);
  const sy = Math.sin(cam.yawDeg * DEG);
  const cp = Math.cos(cam.pitchDeg * DEG);
  const sp = Math.sin(cam.pitchDeg * DEG);
  // Camera position in world coordinates.
  const eye: Point3 = [
    cam.target[0] + cam.distance * cp * sy,
    cam.target[1] - cam.distance * cp * cy,
    cam.target[2] + cam.distance * sp,
  ];
  // Forward (camera +z) points from eye to target.
  const f = normalize(sub(cam.target, eye));
  const worldUp: Point3 = [0, 0, 1];
  const r = normalize(cross(f, worldUp)); // screen-right
  const d = cross(f, r); // screen-down (+y in image coordinates)
  return [
    [r[0], r[1], r[2], -dot(r, eye)],
    [d[0], d[1], d[2], -dot(d, eye)],
    [f[0], f[1], f[2], -dot(f, eye)],
    [0, 0, 0, 1],
  ];
}

export function viewMatrix(cam: Camera, scene: SceneState): Matrix4 | null {
  if (cam.mode === "orbit") return orbitViewMatrix(cam);
  return scene.trackerPose;
}

function sub(a: Point3, b: Point3): Point3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function dot(a: Point3, b: Point3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

function cross(a: Point3, b: Point3): Point3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function normalize(v: Point3): Point3 {
  const n = Math.hypot(v[0], v[1], v[2]) || 1;
  return [v[0] / n, v[1] / n, v[2] / n];
}

export function applyMatrix(m: Matrix4, p: Point3): Point3 {
  return [
    m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2] + m[0][3],
    m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2] + m[1][3],
    m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2] + m[2][3],
  ];
}

/** Perspective projection into canvas pixels; null when behind the camera. */
export function projectPoint(
  view: Matrix4,
  p: Point3,
  width: number,
  height: number,
  focalPx = 600,
): ProjectedPoint | null {
  const cam = applyMatrix(view, p);
  if (cam[2] <= 1e-6) return null;
  return {
    x: width / 2 + (focalPx * cam[0]) / cam[2],
    y: height / 2 + (focalPx * cam[1]) / cam[2],
    depth: cam[2],
  };
}

export interface LayerHit {
  layer: "live" | "saved";
  index: number;
  distancePx: number;
}

/** Nearest visible cloud point to a canvas position; hidden layers are never
 * hit-tested. */
export function hitTest(
  scene: SceneState,
  cam: Camera,
  x: number,
  y: number,
  width: number,
  height: number,
  radiusPx = 8,
): LayerHit | null {
  const view = viewMatrix(cam, scene);
  if (!view) return null;
  let best: LayerHit | null = null;
  const layers: Array<["live" | "saved", CloudLayer]> = [
    ["live", scene.live],
    ["saved", scene.saved],
  ];
  for (const [name, layer] of layers) {
    if (!layer.visible) continue;
    for (let i = 0; i < layer.points.length; i++) {
      const proj = projectPoint(view, layer.points[i], width, height);
      if (!proj) continue;
      const d = Math.hypot(proj.x - x, proj.y - y);
      if (d <= radiusPx && (best === null || d < best.distancePx)) {
        best = { layer: name, index: i, distancePx: d };
      }
    }
  }
  return best;
}

/** Device glyph polyline segments in world space, derived from the posed
 * source/detector/gantry frames of the snapshot. */
export function deviceGlyphSegments(scene: SceneState): Array<[Point3, Point3]> {
  if (!scene.sourcePose || !scene.detectorPose || !scene.gantryPose) return [];
  const src = column3(scene.sourcePose);
  const det = column3(scene.detectorPose);
  const iso = column3(scene.gantryPose);
  const segments: Array<[Point3, Point3]> = [[src, det]];
  // C arc sketched as a chord fan in the gantry frame's y-z plane.
  const g = scene.gantryPose;
  const radius = 700;
  let prev: Point3 | null = null;
  for (let a = -15; a <= 195; a += 15) {
    const rad = a * DEG;
    const local: Point3 = [0, radius * Math.sin(rad), -radius * Math.cos(rad)];
    const world = applyMatrix(g, local);
    if (prev) segments.push([prev, world]);
    prev = world;
  }
  segments.push([iso, det]);
  return segments;
}

function column3(m: Matrix4): Point3 {
  return [m[0][3], m[1][3], m[2][3]];
}

/** Render the scene onto a 2D canvas context. Pure function of its inputs:
 * replaying the same snapshots yields the same draw calls. */
export function renderScene(
  ctx: CanvasRenderingContext2D,
  scene: SceneState,
  cam: Camera,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, width, height);
  const view = viewMatrix(cam, scene);
  if (!view) return;
  ctx.strokeStyle = "#2a3442";
  ctx.lineWidth = 1;
  for (const [a, b] of deviceGlyphSegments(scene)) {
    const pa = projectPoint(view, a, width, height);
    const pb = projectPoint(view, b, width, height);
    if (!pa || !pb) continue;
    ctx.beginPath();
    ctx.moveTo(pa.x, pa.y);
    ctx.lineTo(pb.x, pb.y);
    ctx.stroke();
  }
  // Saved (green) under live (red) so misalignment reads as red fringes.
  for (const layer of [scene.saved, scene.live]) {
    if (!layer.visible) continue;
    ctx.fillStyle = layer.color;
    for (const p of layer.points) {
      const proj = projectPoint(view, p, width, height);
      if (!proj) continue;
      const r = Math.max(0.8, Math.min(3.0, 900 / proj.depth));
      ctx.fillRect(proj.x - r / 2, proj.y - r / 2, r, r);
    }
  }
}
