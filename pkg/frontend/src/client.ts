// Websocket session client: pairing, seq-stamped command envelopes, the
// heartbeat timer, and the click-to-command operations with their guards.
//
// All outbound envelopes flow through sendCommand so the sequence counter
// stays strictly increasing and nothing is ever emitted while unpaired.

import {
  AUTONOMY_LEVELS,
  CMD,
  encodeFrame,
  parseFrame,
  type AutonomyLevel,
  type Envelope,
} from "./protocol";
import { ConsoleStore } from "./store";
import { cellAtPixel, inBounds, pixelToWorld, CELL_FREE } from "./transform";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClickResult {
  ok: boolean;
  reason?: string;
  sent?: Envelope;
  /** robot-frame or world coordinates of the click, for rendering */
  point?: { x: number; y: number };
}

export const HEARTBEAT_MS = 1000;
export const MANUAL_RANGE_M = 3.0;

const defaultFactory: SocketFactory = (url) =>
  new WebSocket(url) as unknown as SocketLike;

export class ConsoleClient {
  readonly store: ConsoleStore;
  private url: string;
  private robotId: string;
  private factory: SocketFactory;
  private ws: SocketLike | null = null;
  private seq = 0;
  private heartbeatTimer: ReturnType<typeof setInterval> | null = null;
  private stamp: () => number;
  /** outbound envelopes, newest last (for tests and debugging) */
  readonly sentLog: Envelope[] = [];

  constructor(
    url: string,
    robotId: string,
    store?: ConsoleStore,
    opts: { socketFactory?: SocketFactory; stamp?: () => number } = {}
  ) {
    this.url = url.replace(/\/$/, "");
    this.robotId = robotId;
    this.store = store ?? new ConsoleStore();
    this.factory = opts.socketFactory ?? defaultFactory;
    this.stamp = opts.stamp ?? (() => Date.now() / 1000);
  }

  connect(): void {
    this.store.connection = "connecting";
    const ws = this.factory(`${this.url}/ws/client`);
    this.ws = ws;
    ws.onopen = () => {
      ws.send(encodeFrame({ type: "connect", robot_id: this.robotId }));
    };
    ws.onmessage = (ev) => {
      const frame = parseFrame(String(ev.data));
      if (!frame) return;
      const wasPaired = this.store.paired;
      this.store.handleFrame(frame);
      if (!wasPaired && this.store.paired) this.startHeartbeats();
      if (wasPaired && !this.store.paired) this.stopHeartbeats();
    };
    ws.onclose = () => {
      this.store.connection = "disconnected";
      this.stopHeartbeats();
    };
    ws.onerror = () => {
      this.store.lastError = this.store.lastError ?? "socket error";
    };
  }

  close(): void {
    this.stopHeartbeats();
    this.ws?.close();
    this.ws = null;
    this.store.connection = "disconnected";
  }

  startHeartbeats(): void {
    if (this.heartbeatTimer !== null) return;
    this.sendCommand(CMD.heartbeat, {});
    this.heartbeatTimer = setInterval(() => {
      this.sendCommand(CMD.heartbeat, {});
    }, HEARTBEAT_MS);
  }

  /** Also used by tests to simulate a silent (crashed) operator UI. */
  stopHeartbeats(): void {
    if (this.heartbeatTimer !== null) {
      clearInterval(this.heartbeatTimer);
      this.heartbeatTimer = null;
    }
  }

  /** Guarded send; returns the envelope or null when not paired. */
  sendCommand(topic: string, payload: Record<string, unknown>): Envelope | null {
    if (!this.store.paired || !this.ws) return null;
    const envelope: Envelope = {
      topic,
      seq: ++this.seq,
      stamp: this.stamp(),
      payload,
    };
    this.ws.send(encodeFrame({ type: "data", envelope }));
    this.sentLog.push(envelope);
    return envelope;
  }

  // -- operator actions ----------------------------------------------------

  /** Map-view click: only meaningful in autonomous mode. px/py are raster
   *  pixels (row 0 at the top of the picture). */
  clickMapGoal(px: number, py: number): ClickResult {
    const map = this.store.map;
    if (!this.store.paired) return { ok: false, reason: "not paired" };
    if (!map) return { ok: false, reason: "no map yet" };
    if (!inBounds(map, px, py)) return { ok: false, reason: "outside map" };
    if (this.store.mode !== "autonomous") {
      return { ok: false, reason: "switch to autonomous mode to set goals" };
    }
    if (cellAtPixel(map, px, py) !== CELL_FREE) {
      return { ok: false, reason: "that spot is not free space" };
    }
    const world = pixelToWorld(map, px, py);
    const sent = this.sendCommand(CMD.goal, { x: world.x, y: world.y });
    return sent ? { ok: true, sent, point: world } : { ok: false, reason: "not paired" };
  }

  /** Ground-view click: robot-frame meters. Beyond the manual range the
   *  disk renders red and nothing is sent. */
  clickDriveTarget(xr: number, yr: number): ClickResult {
    if (!this.store.paired) return { ok: false, reason: "not paired" };
    if (this.store.mode === "autonomous") {
      return { ok: false, reason: "drive targets need a manual or assisted mode" };
    }
    const range = Math.hypot(xr, yr);
    if (range > MANUAL_RANGE_M) {
      return { ok: false, reason: "beyond manual range", point: { x: xr, y: yr } };
    }
    const sent = this.sendCommand(CMD.manualTarget, { x: xr, y: yr });
    return sent
      ? { ok: true, sent, point: { x: xr, y: yr } }
      : { ok: false, reason: "not paired" };
  }

  /** Autonomy slider: badge only changes when the ack telemetry arrives. */
  setAutonomy(level: AutonomyLevel): Envelope | null {
    if (!AUTONOMY_LEVELS.includes(level)) return null;
    const sent = this.sendCommand(CMD.autonomy, { level });
    if (sent) this.store.noteModeRequest(level);
    return sent;
  }

  setLamp(on: boolean): Envelope | null {
    return this.sendCommand(CMD.lamp, { on });
  }

  setVelocity(v: number, w: number): Envelope | null {
    return this.sendCommand(CMD.vel, { v, w });
  }

  requestFullScan(): Envelope | null {
    return this.sendCommand(CMD.requestScan, {});
  }
}
