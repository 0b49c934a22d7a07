import type { Snapshot, Point3 } from "../src/protocol.js";

const IDENT = [
  [1, 0, 0, 0],
  [0, 1, 0, 0],
  [0, 0, 1, 0],
  [0, 0, 0, 1],
];

export function makeSnapshot(overrides: Partial<Snapshot> = {}): Snapshot {
  const dofs = {
    base_x: 0, base_y: 0, column_height: 0, wheel_yaw: 0,
    orbital: 0, angular_tilt: 0, swivel: 0,
  };
  return {
    type: "snapshot",
    sequence: 1,
    time: 1.0,
    dofs,
    dof_ranges: {
      column_height: [0, 450], orbital: [-95, 95],
      angular_tilt: [-190, 190], swivel: [-12, 12],
    },
    tracker_pose: IDENT,
    gantry_pose: IDENT,
    source_pose: IDENT,
    detector_pose: IDENT,
    live_visible: true,
    live_cloud: [[0, 0, 0], [10, 0, 0]] as Point3[],
    shown_view: null,
    shown_cloud: null,
    saved_views: [],
    xray_counts: {},
    alignment: null,
    banding_thresholds: { good_mm: 5, good_deg: 1, warn_mm: 20, warn_deg: 3 },
    events: [],
    ...overrides,
  };
}

export class FakeSocket {
  sent: string[] = [];
  closed = false;
  onmessage: ((event: { data: string }) => void) | null = null;
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  open(): void {
    this.onopen?.();
  }

  receive(msg: unknown): void {
    this.onmessage?.({ data: JSON.stringify(msg) });
  }

  lastSent(): Record<string, unknown> {
    return JSON.parse(this.sent[this.sent.length - 1]);
  }
}

export class FakeClock {
  t = 0;
  timers: Array<{ at: number; fn: () => void; id: number }> = [];
  private counter = 0;

  now = (): number => this.t;

  setTimer = (fn: () => void, ms: number): unknown => {
    this.counter += 1;
    this.timers.push({ at: this.t + ms, fn, id: this.counter });
    return this.counter;
  };

  clearTimer = (handle: unknown): void => {
    this.timers = this.timers.filter((t) => t.id !== handle);
  };

  advance(ms: number): void {
    const target = this.t + ms;
    for (;;) {
      const due = this.timers
        .filter((t) => t.at <= target)
        .sort((a, b) => a.at - b.at)[0];
      if (!due) break;
      this.timers = this.timers.filter((t) => t.id !== due.id);
      this.t = due.at;
      due.fn();
    }
    this.t = target;
  }
}
