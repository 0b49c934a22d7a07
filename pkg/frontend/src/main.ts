/** DOM wiring: connects the protocol client, reducers, and viewport. */

import { SessionClient, type SocketLike } from "./client.js";
import { isParseFailure, parseConsoleInput } from "./console.js";
import { DOF_NAMES, type DofName } from "./protocol.js";
import {
  appendLog,
  applySnapshot,
  clampToRange,
  createPanel,
  createScene,
  setConnected,
  type PanelState,
  type SceneState,
} from "./state.js";
import { DEFAULT_CAMERA, renderScene, type Camera, type OrbitCamera } from "./viewport.js";

const DOF_LABELS: Record<DofName, string> = {
  base_x: "Base X (mm)",
  base_y: "Base Y (mm)",
  column_height: "Column (mm)",
  wheel_yaw: "Wheel yaw (deg)",
  orbital: "Orbital (deg)",
  angular_tilt: "Tilt (deg)",
  swivel: "Swivel (deg)",
};

const UNBOUNDED: [number, number] = [-500, 500];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startApp(): void {
  let scene: SceneState = createScene();
  let panel: PanelState = createPanel();
  let camera: Camera = { ...DEFAULT_CAMERA };

  const canvas = el<HTMLCanvasElement>("viewport");
  const ctx = canvas.getContext("2d")!;
  const sliderBox = el<HTMLDivElement>("sliders");
  const consoleInput = el<HTMLInputElement>("console-input");
  const logBox = el<HTMLDivElement>("console-log");
  const statusEl = el<HTMLSpanElement>("status");
  const alignmentEl = el<HTMLDivElement>("alignment");
  const viewsEl = el<HTMLDivElement>("views");
  const povToggle = el<HTMLInputElement>("pov-toggle");

  const client = new SessionClient({ offlinePolicy: "queue" });

  const sliders = new Map<DofName, HTMLInputElement>();
  const readouts = new Map<DofName, HTMLSpanElement>();
  for (const dof of DOF_NAMES) {
    const row = document.createElement("label");
    row.className = "slider-row";
    const caption = document.createElement("span");
    caption.textContent = DOF_LABELS[dof];
    const value = document.createElement("span");
    value.className = "value";
    const input = document.createElement("input");
    input.type = "range";
    input.step = "0.5";
    const [lo, hi] = UNBOUNDED;
    input.min = String(lo);
    input.max = String(hi);
    input.value = "0";
    input.addEventListener("input", () => {
      const clamped = clampToRange(panel.ranges, dof, Number(input.value));
      input.value = String(clamped);
      value.textContent = clamped.toFixed(1);
      client.sendSlider(dof, clamped);
    });
    row.append(caption, input, value);
    sliderBox.append(row);
    sliders.set(dof, input);
    readouts.set(dof, value);
  }

  function refreshPanel(): void {
    statusEl.textContent = panel.connected ? "connected" : "disconnected";
    statusEl.className = panel.connected ? "ok" : "bad";
    sliderBox.classList.toggle("disabled", !panel.connected);
    consoleInput.disabled = !panel.connected;
    for (const dof of DOF_NAMES) {
      const input = sliders.get(dof)!;
      const range = panel.ranges[dof];
      if (range) {
        input.min = String(range[0]);
        input.max = String(range[1]);
      }
      if (document.activeElement !== input) {
        input.value = String(panel.sliders[dof]);
      }
      readouts.get(dof)!.textContent = panel.sliders[dof].toFixed(1);
    }
    const a = panel.alignment;
    if (a) {
      alignmentEl.innerHTML =
        `<span class="band ${a.band}">${a.band.toUpperCase()}</span>` +
        ` ${a.distanceMm.toFixed(1)} mm / ${a.angleDeg.toFixed(2)} deg` +
        ` (rms ${a.rmsMm.toFixed(2)} mm${a.converged ? "" : ", not converged"})` +
        `<div class="fineprint">banding is a display aid, not a clinical threshold</div>` +
        (a.hints
          ? `<div class="hints">${Object.entries(a.hints)
              .filter(([, v]) => Math.abs(v) > 0.05)
              .map(([k, v]) => `${k} ${v > 0 ? "+" : ""}${v.toFixed(1)}`)
              .join(", ") || "aligned"}</div>`
          : "")
    } else {
      alignmentEl.textContent = "no alignment yet";
    }
    viewsEl.innerHTML = "";
    for (const name of panel.savedViews) {
      const b = document.createElement("button");
      b.textContent = (panel.shownView === name ? "● " : "") + name;
      b.addEventListener("click", () => client.send("show_view", { name }));
      viewsEl.append(b);
    }
    logBox.innerHTML = panel.log.map((l) => `<div>${l}</div>`).join("");
    logBox.scrollTop = logBox.scrollHeight;
  }

  function redraw(): void {
    const dpr = window.devicePixelRatio || 1;
    const w = canvas.clientWidth, h = canvas.clientHeight;
    if (canvas.width !== w * dpr || canvas.height !== h * dpr) {
      canvas.width = w * dpr;
      canvas.height = h * dpr;
    }
    ctx.setTransform(dpr, 0, 0, dpr, 0, 0);
    renderScene(ctx, scene, camera, w, h);
  }

  client.onConnectionChange = (connected) => {
    panel = setConnected(panel, connected);
    refreshPanel();
  };
  client.onReply = (reply) => {
    if (!reply.ok) {
      panel = appendLog(panel, `error: ${reply.error}`);
      refreshPanel();
    }
  };
  client.onSnapshot = (msg) => {
    const result = applySnapshot(scene, panel, msg, (text) =>
      console.warn(text),
    );
    if (result.applied) {
      scene = result.scene;
      panel = setConnected(result.panel, client.isConnected);
      refreshPanel();
      redraw();
    }
  };

  consoleInput.addEventListener("keydown", (ev) => {
    if (ev.key !== "Enter") return;
    const text = consoleInput.value;
    consoleInput.value = "";
    const parsed = parseConsoleInput(text);
    panel = appendLog(panel, `> ${text}`);
    if (isParseFailure(parsed)) {
      panel = appendLog(panel, `error: ${parsed.error}`);
    } else {
      client.send(parsed.verb, parsed.args, {
        resolve: (reply) => {
          if (reply.ok) panel = appendLog(panel, `ok: ${parsed.verb}`);
          refreshPanel();
        },
      });
    }
    refreshPanel();
  });

  povToggle.addEventListener("change", () => {
    camera = povToggle.checked ? { mode: "pov" } : { ...DEFAULT_CAMERA };
    redraw();
  });

  let dragging = false;
  let lastX = 0, lastY = 0;
  canvas.addEventListener("mousedown", (ev) => {
    dragging = true;
    lastX = ev.clientX;
    lastY = ev.clientY;
  });
  window.addEventListener("mouseup", () => (dragging = false));
  window.addEventListener("mousemove", (ev) => {
    if (!dragging || camera.mode !== "orbit") return;
    const orbit = camera as OrbitCamera;
    orbit.yawDeg += (ev.clientX - lastX) * 0.4;
    orbit.pitchDeg = Math.max(-85, Math.min(85, orbit.pitchDeg + (ev.clientY - lastY) * 0.4));
    lastX = ev.clientX;
    lastY = ev.clientY;
    redraw();
  });
  canvas.addEventListener("wheel", (ev) => {
    if (camera.mode !== "orbit") return;
    ev.preventDefault();
    const orbit = camera as OrbitCamera;
    orbit.distance = Math.max(800, Math.min(12000, orbit.distance * (ev.deltaY > 0 ? 1.1 : 0.9)));
    redraw();
  });

  for (const [id, verb] of [
    ["btn-reset", "reset_neutral"],
    ["btn-live", "toggle_live"],
    ["btn-hide", "hide_view"],
    ["btn-align", "request_alignment"],
  ] as const) {
    el<HTMLButtonElement>(id).addEventListener("click", () => client.send(verb, {}));
  }

  const proto = location.protocol === "https:" ? "wss" : "ws";
  const ws = new WebSocket(`${proto}://${location.host}/ws`);
  client.attach(ws as unknown as SocketLike);

  window.addEventListener("resize", redraw);
  refreshPanel();
  redraw();
}

startApp();
