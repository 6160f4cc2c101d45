// Wire vocabulary shared with the relay: signaling frames plus
// topic-addressed JSON envelopes, one JSON document per websocket message.

export interface Envelope {
  topic: string;
  seq: number;
  stamp: number;
  payload: Record<string, unknown>;
}

export type Frame =
  | { type: "paired"; robot_id?: string }
  | { type: "error"; code: string; detail?: string }
  | { type: "data"; envelope: Envelope }
  | { type: string; [key: string]: unknown };

export const CMD = {
  vel: "/cmd/vel",
  manualTarget: "/cmd/manual_target",
  goal: "/cmd/goal",
  autonomy: "/cmd/autonomy",
  lamp: "/cmd/lamp",
  heartbeat: "/cmd/heartbeat",
  requestScan: "/cmd/request_scan",
} as const;

export const TELEMETRY = {
  pose: "/telemetry/pose",
  scan: "/telemetry/scan",
  scanFull: "/telemetry/scan_full",
  mode: "/telemetry/mode",
  lamp: "/telemetry/lamp",
  battery: "/telemetry/battery",
  dose: "/telemetry/dose",
  goalStatus: "/telemetry/goal_status",
  map: "/telemetry/map",
  doseMap: "/telemetry/dose_map",
  anomaly: "/telemetry/anomaly",
} as const;

export const AUTONOMY_LEVELS = [
  "manual",
  "assisted_decel",
  "assisted_steer",
  "autonomous",
] as const;
export type AutonomyLevel = (typeof AUTONOMY_LEVELS)[number];

export interface PosePayload {
  x: number;
  y: number;
  theta: number;
}

export interface ScanPayload {
  angle_min: number;
  increment: number;
  ranges: number[];
  range_max?: number;
}

export interface LampPayload {
  on: boolean;
  forced_off: boolean;
}

export interface BatteryPayload {
  wh: number;
  fraction: number;
}

export interface DosePayload {
  covered_fraction: number;
  min: number;
  mean: number;
}

export interface GoalStatusPayload {
  state: string;
  reason?: string;
}

export interface MapPayload {
  width: number;
  height: number;
  resolution: number;
  origin: { x: number; y: number; theta: number };
  cells: string; // base64, row-major from the min-y row
}

export interface DoseMapPayload {
  width: number;
  height: number;
  stride: number;
  data: string; // base64 uint8, 255 = required dose reached
}

export function parseFrame(raw: string): Frame | null {
  try {
    const frame = JSON.parse(raw);
    if (frame && typeof frame.type === "string") return frame as Frame;
  } catch {
    // fall through
  }
  return null;
}

export function encodeFrame(frame: Frame): string {
  return JSON.stringify(frame);
}
