import { describe, expect, it } from "vitest";

import { LAYER_COLORS } from "../src/colors.js";
import {
  applySnapshot,
  clampToRange,
  createPanel,
  createScene,
} from "../src/state.js";
import { makeSnapshot } from "./helpers.js";

describe("applySnapshot", () => {
  it("applies a fresh snapshot to scene and panel", () => {
    const snap = makeSnapshot({
      sequence: 3,
      dofs: {
        base_x: 12, base_y: 0, column_height: 100, wheel_yaw: 0,
        orbital: -30, angular_tilt: 0, swivel: 0,
      },
      saved_views: ["Position 1"],
      shown_view: "Position 1",
      shown_cloud: [[1, 2, 3]],
    });
    const { scene, panel, applied } = applySnapshot(createScene(), createPanel(), snap);
    expect(applied).toBe(true);
    expect(scene.lastSequence).toBe(3);
    expect(scene.dofs.orbital).toBe(-30);
    expect(panel.sliders.base_x).toBe(12);
    expect(panel.savedViews).toEqual(["Position 1"]);
    expect(scene.saved.visible).toBe(true);
    expect(scene.saved.points).toEqual([[1, 2, 3]]);
  });

  it("is idempotent per sequence number and drops stale snapshots", () => {
    const first = applySnapshot(createScene(), createPanel(), makeSnapshot({ sequence: 5 }));
    const again = applySnapshot(first.scene, first.panel, makeSnapshot({ sequence: 5 }));
    expect(again.applied).toBe(false);
    expect(again.scene).toBe(first.scene);
    expect(again.panel).toBe(first.panel);
    const stale = applySnapshot(
      first.scene,
      first.panel,
      makeSnapshot({ sequence: 4, dofs: { ...makeSnapshot().dofs, base_x: 99 } }),
    );
    expect(stale.applied).toBe(false);
    expect(stale.scene.dofs.base_x).not.toBe(99);
  });

  it("leaves the UI unchanged and logs on malformed input", () => {
    const warnings: string[] = [];
    const scene = createScene();
    const panel = createPanel();
    const result = applySnapshot(scene, panel, { type: "snapshot" }, (t) => warnings.push(t));
    expect(result.applied).toBe(false);
    expect(result.scene).toBe(scene);
    expect(result.panel).toBe(panel);
    expect(warnings).toHaveLength(1);
  });

  it("hides the live layer when toggled off, leaving saved untouched", () => {
    const snap = makeSnapshot({
      sequence: 2,
      live_visible: false,
      live_cloud: null,
      shown_view: "v",
      shown_cloud: [[0, 0, 0]],
    });
    const { scene } = applySnapshot(createScene(), createPanel(), snap);
    expect(scene.live.visible).toBe(false);
    expect(scene.saved.visible).toBe(true);
  });

  it("never reassigns the layer colors: saved green, live red", () => {
    const base = applySnapshot(createScene(), createPanel(), makeSnapshot());
    const toggled = applySnapshot(
      base.scene,
      base.panel,
      makeSnapshot({ sequence: 2, live_visible: false, live_cloud: null }),
    );
    for (const scene of [base.scene, toggled.scene]) {
      expect(scene.live.color).toBe(LAYER_COLORS.live);
      expect(scene.saved.color).toBe(LAYER_COLORS.saved);
      expect(scene.live.color).toBe("#e74c3c");
      expect(scene.saved.color).toBe("#2ecc71");
    }
  });

  it("derives amber banding for a (12 mm, 2 deg) report under defaults", () => {
    const snap = makeSnapshot({
      sequence: 2,
      alignment: {
        distance_mm: 12,
        angle_deg: 2,
        rms_mm: 6,
        iterations: 7,
        converged: true,
        correspondences: 4000,
        dof_hints: { increments: { base_x: -11.5 }, reliable: true },
      },
    });
    const { panel } = applySnapshot(createScene(), createPanel(), snap);
    expect(panel.alignment?.band).toBe("amber");
    expect(panel.alignment?.hints).toEqual({ base_x: -11.5 });
  });

  it("prefers the server-computed banding when present", () => {
    const snap = makeSnapshot({
      sequence: 2,
      alignment: {
        distance_mm: 12,
        angle_deg: 2,
        rms_mm: 6,
        iterations: 7,
        converged: true,
        correspondences: 4000,
        banding: "red",
        dof_hints: null,
      },
    });
    const { panel } = applySnapshot(createScene(), createPanel(), snap);
    expect(panel.alignment?.band).toBe("red");
  });
});

describe("slider clamping", () => {
  const ranges = { orbital: [-95, 95] as [number, number] };

  it("clamps to the server-declared range", () => {
    expect(clampToRange(ranges, "orbital", 120)).toBe(95);
    expect(clampToRange(ranges, "orbital", -400)).toBe(-95);
    expect(clampToRange(ranges, "orbital", 30)).toBe(30);
  });

  it("passes unbounded DOFs through", () => {
    expect(clampToRange(ranges, "base_x", 1234)).toBe(1234);
  });
});
