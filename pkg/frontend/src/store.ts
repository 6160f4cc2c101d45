// Per-topic last-value store plus the derived UI state.
//
// The mode badge tracks acknowledged telemetry only: requesting a level
// never flips it. Telemetry older than STALE_MS shows a degraded link.

import type {
  BatteryPayload,
  DoseMapPayload,
  DosePayload,
  Frame,
  GoalStatusPayload,
  LampPayload,
  PosePayload,
  ScanPayload,
} from "./protocol";
import { TELEMETRY } from "./protocol";
import { decodeMap, type MapInfo } from "./transform";

export const STALE_MS = 2000;

export type Connection = "disconnected" | "connecting" | "paired";
export type LampState = "on" | "off" | "forced_off";

export class ConsoleStore {
  connection: Connection = "disconnected";
  lastError: string | null = null;

  mode: string | null = null; // last acknowledged /telemetry/mode
  pendingMode: string | null = null; // requested, not yet acknowledged
  lamp: LampPayload | null = null;
  battery: BatteryPayload | null = null;
  pose: PosePayload | null = null;
  scan: ScanPayload | null = null;
  dose: DosePayload | null = null;
  doseMap: DoseMapPayload | null = null;
  goalStatus: GoalStatusPayload | null = null;
  map: MapInfo | null = null;
  anomalies: Record<string, unknown>[] = [];

  private lastTelemetryAt: number | null = null;
  private clock: () => number;

  constructor(clock: () => number = () => Date.now()) {
    this.clock = clock;
  }

  handleFrame(frame: Frame): void {
    if (frame.type === "paired") {
      this.connection = "paired";
      this.lastError = null;
      this.lastTelemetryAt = this.clock();
      return;
    }
    if (frame.type === "error") {
      this.lastError = String((frame as { code?: string }).code ?? "error");
      if (this.lastError === "SessionClosed") this.connection = "disconnected";
      return;
    }
    if (frame.type !== "data") return;
    const env = (frame as { envelope?: { topic?: string; payload?: unknown } }).envelope;
    if (!env || typeof env.topic !== "string") return;
    this.lastTelemetryAt = this.clock();
    const payload = env.payload as never;
    switch (env.topic) {
      case TELEMETRY.mode:
        this.mode = (payload as { level: string }).level;
        if (this.pendingMode === this.mode) this.pendingMode = null;
        break;
      case TELEMETRY.lamp:
        this.lamp = payload;
        break;
      case TELEMETRY.battery:
        this.battery = payload;
        break;
      case TELEMETRY.pose:
        this.pose = payload;
        break;
      case TELEMETRY.scan:
      case TELEMETRY.scanFull:
        this.scan = payload;
        break;
      case TELEMETRY.dose:
        this.dose = payload;
        break;
      case TELEMETRY.doseMap:
        this.doseMap = payload;
        break;
      case TELEMETRY.goalStatus:
        this.goalStatus = payload;
        break;
      case TELEMETRY.map:
        this.map = decodeMap(payload);
        break;
      case TELEMETRY.anomaly:
        this.anomalies.push(payload);
        if (this.anomalies.length > 50) this.anomalies.shift();
        break;
    }
  }

  noteModeRequest(level: string): void {
    this.pendingMode = level;
  }

  get paired(): boolean {
    return this.connection === "paired";
  }

  /** No telemetry for a while: show the operator a degraded link. */
  get stale(): boolean {
    if (!this.paired || this.lastTelemetryAt === null) return false;
    return this.clock() - this.lastTelemetryAt > STALE_MS;
  }

  /** Three-way lamp indicator; the watchdog cut-off renders distinctly. */
  get lampState(): LampState {
    if (!this.lamp) return "off";
    if (this.lamp.on) return "on";
    return this.lamp.forced_off ? "forced_off" : "off";
  }

  /** What the mode badge shows: acknowledged level only. */
  get badge(): string {
    return this.mode ?? "–";
  }
}
