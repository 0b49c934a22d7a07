import { describe, expect, it } from "vitest";

import { applySnapshot, createPanel, createScene } from "../src/state.js";
import {
  DEFAULT_CAMERA,
  deviceGlyphSegments,
  hitTest,
  orbitViewMatrix,
  projectPoint,
  renderScene,
  viewMatrix,
} from "../src/viewport.js";
import { makeSnapshot } from "./helpers.js";

const W = 800;
const H = 600;

describe("orbit camera projection", () => {
  it("projects the orbit target to the canvas center", () => {
    const cam = { ...DEFAULT_CAMERA, target: [10, -20, 30] as [number, number, number] };
    const view = orbitViewMatrix(cam);
    const p = projectPoint(view, cam.target, W, H);
    expect(p).not.toBeNull();
    expect(p!.x).toBeCloseTo(W / 2, 6);
    expect(p!.y).toBeCloseTo(H / 2, 6);
    expect(p!.depth).toBeCloseTo(cam.distance, 6);
  });

  it("culls points behind the camera", () => {
    const cam = { ...DEFAULT_CAMERA, yawDeg: 0, pitchDeg: 0, distance: 1000 };
    const view = orbitViewMatrix(cam);
    // The camera sits at y = -1000 looking toward +y; far -y is behind it.
    expect(projectPoint(view, [0, -5000, 0], W, H)).toBeNull();
    expect(projectPoint(view, [0, 0, 0], W, H)).not.toBeNull();
  });

  it("pov mode uses the tracker pose from the snapshot", () => {
    const { scene } = applySnapshot(createScene(), createPanel(), makeSnapshot());
    expect(viewMatrix({ mode: "pov" }, scene)).toBe(scene.trackerPose);
  });
});

describe("hit testing", () => {
  function sceneWith(liveVisible: boolean) {
    const snap = makeSnapshot({
      live_visible: liveVisible,
      live_cloud: liveVisible ? [[0, 0, 0]] : null,
      shown_view: "v",
      shown_cloud: [[0, 0, 0]],
    });
    return applySnapshot(createScene(), createPanel(), snap).scene;
  }

  it("hits the nearest visible layer", () => {
    const scene = sceneWith(true);
    const view = orbitViewMatrix(DEFAULT_CAMERA);
    const at = projectPoint(view, [0, 0, 0], W, H)!;
    const hit = hitTest(scene, DEFAULT_CAMERA, at.x, at.y, W, H);
    expect(hit).not.toBeNull();
  });

  it("never hit-tests hidden layers", () => {
    const scene = sceneWith(false);
    const view = orbitViewMatrix(DEFAULT_CAMERA);
    const at = projectPoint(view, [0, 0, 0], W, H)!;
    const hit = hitTest(scene, DEFAULT_CAMERA, at.x, at.y, W, H);
    expect(hit?.layer).toBe("saved"); // live layer is hidden, saved still hits
    const empty = applySnapshot(
      createScene(),
      createPanel(),
      makeSnapshot({ live_visible: false, live_cloud: null }),
    ).scene;
    expect(hitTest(empty, DEFAULT_CAMERA, at.x, at.y, W, H)).toBeNull();
  });
});

describe("glyph and deterministic rendering", () => {
  class RecordingContext {
    calls: string[] = [];
    fillStyle = "";
    strokeStyle = "";
    lineWidth = 1;
    clearRect(...a: number[]) { this.calls.push(`clear ${a.join(",")}`); }
    fillRect(...a: number[]) {
      this.calls.push(`fill ${this.fillStyle} ${a.map((v) => v.toFixed(2)).join(",")}`);
    }
    beginPath() { this.calls.push("begin"); }
    moveTo(x: number, y: number) { this.calls.push(`move ${x.toFixed(2)},${y.toFixed(2)}`); }
    lineTo(x: number, y: number) { this.calls.push(`line ${x.toFixed(2)},${y.toFixed(2)}`); }
    stroke() { this.calls.push("stroke"); }
  }

  it("derives glyph segments from the posed frames", () => {
    const { scene } = applySnapshot(createScene(), createPanel(), makeSnapshot());
    const segments = deviceGlyphSegments(scene);
    expect(segments.length).toBeGreaterThan(10); // arc fan + axis + arm
  });

  it("replaying the same snapshot stream renders identically", () => {
    const snaps = [
      makeSnapshot({ sequence: 1 }),
      makeSnapshot({
        sequence: 2,
        shown_view: "v",
        shown_cloud: [[100, 50, 0], [0, -40, 60]],
      }),
      makeSnapshot({ sequence: 3, live_visible: false, live_cloud: null }),
    ];
    const render = () => {
      let scene = createScene();
      let panel = createPanel();
      for (const s of snaps) {
        const r = applySnapshot(scene, panel, s);
        scene = r.scene;
        panel = r.panel;
      }
      const ctx = new RecordingContext();
      renderScene(ctx as unknown as CanvasRenderingContext2D, scene, DEFAULT_CAMERA, W, H);
      return ctx.calls;
    };
    expect(render()).toEqual(render());
  });

  it("skips hidden layers entirely when drawing", () => {
    const { scene } = applySnapshot(
      createScene(),
      createPanel(),
      makeSnapshot({ live_visible: false, live_cloud: null }),
    );
    const ctx = new RecordingContext();
    renderScene(ctx as unknown as CanvasRenderingContext2D, scene, DEFAULT_CAMERA, W, H);
    expect(ctx.calls.some((c) => c.includes("#e74c3c"))).toBe(false);
  });
});
