// Canvas rendering: map raster, dose overlay, robot, scan, and markers.
// Pure draw functions over the store; main.ts calls render() per frame.

import type { ConsoleStore } from "./store";
import { decodeBase64, worldToPixel, type MapInfo } from "./transform";
import { CELL_FREE, CELL_OCCUPIED } from "./transform";
import { MANUAL_RANGE_M } from "./client";

const FOOT_LENGTH = 0.62;
const FOOT_WIDTH = 0.49;

export interface Markers {
  goal: { x: number; y: number } | null; // world
  drive: { x: number; y: number; ok: boolean } | null; // robot frame
}

let mapImage: ImageData | null = null;
let mapImageFor: MapInfo | null = null;

function buildMapImage(map: MapInfo): ImageData {
  const img = new ImageData(map.width, map.height);
  for (let i = 0; i < map.cells.length; i++) {
    const v = map.cells[i];
    const shade = v === CELL_FREE ? 245 : v === CELL_OCCUPIED ? 30 : 150;
    img.data[i * 4] = shade;
    img.data[i * 4 + 1] = shade;
    img.data[i * 4 + 2] = shade;
    img.data[i * 4 + 3] = 255;
  }
  return img;
}

export function mapScale(canvas: HTMLCanvasElement, map: MapInfo): number {
  return Math.min(canvas.width / map.width, canvas.height / map.height);
}

export function canvasToPixel(
  canvas: HTMLCanvasElement,
  map: MapInfo,
  cx: number,
  cy: number
): { px: number; py: number } {
  const s = mapScale(canvas, map);
  return { px: cx / s, py: cy / s };
}

export function renderMapView(
  canvas: HTMLCanvasElement,
  store: ConsoleStore,
  markers: Markers
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.fillStyle = "#222";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const map = store.map;
  if (!map) {
    ctx.fillStyle = "#888";
    ctx.fillText("waiting for map…", 16, 24);
    return;
  }
  if (mapImageFor !== map) {
    mapImage = buildMapImage(map);
    mapImageFor = map;
  }
  const s = mapScale(canvas, map);
  ctx.save();
  ctx.imageSmoothingEnabled = false;

  const off = new OffscreenCanvas(map.width, map.height);
  const offCtx = off.getContext("2d")!;
  offCtx.putImageData(mapImage!, 0, 0);
  ctx.scale(s, s);
  ctx.drawImage(off, 0, 0);

  drawDoseOverlay(ctx, store, map);
  drawScan(ctx, store, map);
  drawRobot(ctx, store, map);
  drawGoal(ctx, map, markers);
  ctx.restore();
}

function drawDoseOverlay(
  ctx: CanvasRenderingContext2D,
  store: ConsoleStore,
  map: MapInfo
): void {
  const dm = store.doseMap;
  if (!dm) return;
  const data = decodeBase64(dm.data);
  const cellPx = dm.stride; // dose cells per map pixel
  ctx.save();
  ctx.globalAlpha = 0.45;
  for (let row = 0; row < dm.height; row++) {
    for (let col = 0; col < dm.width; col++) {
      const v = data[row * dm.width + col];
      if (v === 0) continue;
      // dose rows arrive min-y first; flip to image rows
      const py = map.height - (row + 1) * cellPx;
      ctx.fillStyle = v >= 255 ? "#7a3cff" : `rgba(80, 120, 255, ${v / 255})`;
      ctx.fillRect(col * cellPx, py, cellPx, cellPx);
    }
  }
  ctx.restore();
}

function drawRobot(
  ctx: CanvasRenderingContext2D,
  store: ConsoleStore,
  map: MapInfo
): void {
  const pose = store.pose;
  if (!pose) return;
  const { px, py } = worldToPixel(map, pose.x, pose.y);
  const r = map.resolution;
  ctx.save();
  ctx.translate(px, py);
  ctx.rotate(-pose.theta); // canvas y grows downward
  ctx.fillStyle = store.lampState === "on" ? "#b474ff" : "#3fa7ff";
  ctx.fillRect(
    -FOOT_LENGTH / 2 / r,
    -FOOT_WIDTH / 2 / r,
    FOOT_LENGTH / r,
    FOOT_WIDTH / r
  );
  ctx.strokeStyle = "#fff";
  ctx.lineWidth = 0.5;
  ctx.beginPath();
  ctx.moveTo(0, 0);
  ctx.lineTo(FOOT_LENGTH / r, 0);
  ctx.stroke();
  ctx.restore();
}

function drawScan(
  ctx: CanvasRenderingContext2D,
  store: ConsoleStore,
  map: MapInfo
): void {
  const scan = store.scan;
  const pose = store.pose;
  if (!scan || !pose) return;
  ctx.fillStyle = "#ff5050";
  const n = scan.ranges.length;
  for (let i = 0; i < n; i++) {
    const rr = scan.ranges[i];
    if (scan.range_max && rr >= scan.range_max - 1e-6) continue;
    const a = pose.theta + scan.angle_min + i * scan.increment;
    const wx = pose.x + rr * Math.cos(a);
    const wy = pose.y + rr * Math.sin(a);
    const { px, py } = worldToPixel(map, wx, wy);
    ctx.fillRect(px - 0.5, py - 0.5, 1, 1);
  }
}

function drawGoal(ctx: CanvasRenderingContext2D, map: MapInfo, markers: Markers): void {
  if (!markers.goal) return;
  const { px, py } = worldToPixel(map, markers.goal.x, markers.goal.y);
  ctx.strokeStyle = "#29d649";
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.arc(px, py, 4, 0, 2 * Math.PI);
  ctx.moveTo(px - 6, py);
  ctx.lineTo(px + 6, py);
  ctx.moveTo(px, py - 6);
  ctx.lineTo(px, py + 6);
  ctx.stroke();
}

/** Robot-centered ground view used for click-to-drive: +x is up. */
export function renderDriveView(
  canvas: HTMLCanvasElement,
  store: ConsoleStore,
  markers: Markers
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  const scale = h / (2 * (MANUAL_RANGE_M + 0.5)); // px per meter
  ctx.fillStyle = "#1a1d24";
  ctx.fillRect(0, 0, w, h);
  ctx.save();
  ctx.translate(w / 2, h / 2);
  ctx.rotate(-Math.PI / 2); // robot +x up

  ctx.strokeStyle = "#3c4252";
  ctx.beginPath();
  ctx.arc(0, 0, MANUAL_RANGE_M * scale, 0, 2 * Math.PI);
  ctx.stroke();

  const scan = store.scan;
  if (scan) {
    ctx.fillStyle = "#ff5050";
    for (let i = 0; i < scan.ranges.length; i++) {
      const rr = scan.ranges[i];
      if (scan.range_max && rr >= scan.range_max - 1e-6) continue;
      const a = scan.angle_min + i * scan.increment;
      ctx.fillRect(
        rr * Math.cos(a) * scale - 1,
        -rr * Math.sin(a) * scale - 1,
        2,
        2
      );
    }
  }

  ctx.fillStyle = "#3fa7ff";
  ctx.fillRect(
    (-FOOT_LENGTH / 2) * scale,
    (-FOOT_WIDTH / 2) * scale,
    FOOT_LENGTH * scale,
    FOOT_WIDTH * scale
  );

  const d = markers.drive;
  if (d) {
    ctx.beginPath();
    ctx.arc(d.x * scale, -d.y * scale, 8, 0, 2 * Math.PI);
    ctx.fillStyle = d.ok ? "rgba(41, 214, 73, 0.6)" : "rgba(230, 60, 60, 0.6)";
    ctx.fill();
  }
  ctx.restore();
}

/** Drive-view canvas coordinates back to robot-frame meters. */
export function driveCanvasToRobot(
  canvas: HTMLCanvasElement,
  cx: number,
  cy: number
): { x: number; y: number } {
  const scale = canvas.height / (2 * (MANUAL_RANGE_M + 0.5));
  // undo the translate + rotate: +x up, +y left
  return {
    x: (canvas.height / 2 - cy) / scale,
    y: (canvas.width / 2 - cx) / scale,
  };
}
