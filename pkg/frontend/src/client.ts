/** WebSocket client: request/reply correlation, a 20 Hz slider throttle, and
 * a configurable queue-or-reject policy while disconnected.
 *
 * The socket and the clock are injected so the protocol logic is testable
 * without a browser or a server.
 */

import type { Reply, Verb } from "./protocol.js";
import { isReply } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((event: { data: string }) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
}

export interface ClientOptions {
  /** "queue" holds commands typed while disconnected and flushes them on
   * reconnect; "reject" fails them immediately. */
  offlinePolicy?: "queue" | "reject";
  throttleMs?: number;
  now?: () => number;
  setTimer?: (fn: () => void, ms: number) => unknown;
  clearTimer?: (handle: unknown) => void;
}

export interface PendingEntry {
  verb: Verb;
  sentAt: number;
  resolve: (reply: Reply) => void;
  reject: (err: Error) => void;
}

export class SessionClient {
  private socket: SocketLike | null = null;
  private counter = 0;
  private pending = new Map<string, PendingEntry>();
  private offline: Array<{ verb: Verb; args: Record<string, unknown> }> = [];
  private readonly policy: "queue" | "reject";
  private readonly throttleMs: number;
  private readonly now: () => number;
  private readonly setTimer: (fn: () => void, ms: number) => unknown;
  private readonly clearTimer: (handle: unknown) => void;
  private connected = false;

  onReply: ((reply: Reply) => void) | null = null;
  onSnapshot: ((snapshot: unknown) => void) | null = null;
  onConnectionChange: ((connected: boolean) => void) | null = null;

  // Per-DOF throttle bookkeeping for slider drags.
  private lastSliderSend = new Map<string, number>();
  private trailingTimers = new Map<string, unknown>();
  private trailingValues = new Map<string, number>();

  constructor(options: ClientOptions = {}) {
    this.policy = options.offlinePolicy ?? "queue";
    this.throttleMs = options.throttleMs ?? 50; // 20 Hz
    this.now = options.now ?? (() => Date.now());
    this.setTimer =
      options.setTimer ?? ((fn, ms) => setTimeout(fn, ms) as unknown);
    this.clearTimer =
      options.clearTimer ?? ((h) => clearTimeout(h as Parameters<typeof clearTimeout>[0]));
  }

  attach(socket: SocketLike): void {
    this.socket = socket;
    socket.onopen = () => {
      this.connected = true;
      this.onConnectionChange?.(true);
      const queued = this.offline.splice(0);
      for (const cmd of queued) this.send(cmd.verb, cmd.args);
    };
    socket.onclose = () => {
      this.connected = false;
      this.onConnectionChange?.(false);
      for (const [, entry] of this.pending) {
        entry.reject(new Error("connection closed"));
      }
      this.pending.clear();
    };
    socket.onmessage = (event) => {
      let msg: unknown;
      try {
        msg = JSON.parse(event.data);
      } catch {
        return;
      }
      if (isReply(msg)) {
        const entry = this.pending.get(msg.request_id);
        if (entry) {
          this.pending.delete(msg.request_id);
          entry.resolve(msg);
        }
        this.onReply?.(msg);
      } else {
        this.onSnapshot?.(msg);
      }
    };
  }

  get isConnected(): boolean {
    return this.connected;
  }

  get pendingCount(): number {
    return this.pending.size;
  }

  /** Send one command; returns its request id, or null when rejected by the
   * offline policy (queued commands get ids when actually sent). */
  send(
    verb: Verb,
    args: Record<string, unknown> = {},
    handlers?: { resolve?: (r: Reply) => void; reject?: (e: Error) => void },
  ): string | null {
    if (!this.connected || this.socket === null) {
      if (this.policy === "queue") {
        this.offline.push({ verb, args });
        return null;
      }
      handlers?.reject?.(new Error("disconnected"));
      return null;
    }
    this.counter += 1;
    const requestId = `ui-${this.counter}`;
    this.pending.set(requestId, {
      verb,
      sentAt: this.now(),
      resolve: handlers?.resolve ?? (() => {}),
      reject: handlers?.reject ?? (() => {}),
    });
    this.socket.send(
      JSON.stringify({ type: "cmd", verb, args, request_id: requestId }),
    );
    return requestId;
  }

  /** Slider drag entry point: at most one set_dofs per DOF per throttle
   * window, with a trailing send so the final value always goes out. */
  sendSlider(dof: string, value: number): void {
    const last = this.lastSliderSend.get(dof) ?? -Infinity;
    const t = this.now();
    this.trailingValues.set(dof, value);
    if (t - last >= this.throttleMs) {
      this.flushSlider(dof);
    } else if (!this.trailingTimers.has(dof)) {
      const handle = this.setTimer(
        () => this.flushSlider(dof),
        this.throttleMs - (t - last),
      );
      this.trailingTimers.set(dof, handle);
    }
  }

  private flushSlider(dof: string): void {
    const handle = this.trailingTimers.get(dof);
    if (handle !== undefined) {
      this.clearTimer(handle);
      this.trailingTimers.delete(dof);
    }
    const value = this.trailingValues.get(dof);
    if (value === undefined) return;
    this.trailingValues.delete(dof);
    this.lastSliderSend.set(dof, this.now());
    this.send("set_dofs", { [dof]: value });
  }
}
