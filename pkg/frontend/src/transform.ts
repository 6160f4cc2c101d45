// Map raster handling and the pixel <-> world transform.
//
// Raster pixels follow the image convention (row 0 at the top of the
// picture, i.e. the max-y edge of the map); the wire sends cell rows
// starting at min-y, so the decoder flips while unpacking.

import type { MapPayload } from "./protocol";

export const CELL_FREE = 0;
export const CELL_OCCUPIED = 1;
export const CELL_UNKNOWN = 2;

export interface MapInfo {
  width: number;
  height: number;
  resolution: number;
  origin: { x: number; y: number; theta: number };
  /** row-major from the TOP row (image convention) */
  cells: Uint8Array;
}

export function decodeBase64(data: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(data);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(data, "base64"));
}

export function decodeMap(payload: MapPayload): MapInfo {
  const raw = decodeBase64(payload.cells);
  if (raw.length !== payload.width * payload.height) {
    throw new Error(
      `map payload is ${raw.length} cells, expected ${payload.width * payload.height}`
    );
  }
  const cells = new Uint8Array(raw.length);
  for (let row = 0; row < payload.height; row++) {
    const src = raw.subarray(row * payload.width, (row + 1) * payload.width);
    cells.set(src, (payload.height - 1 - row) * payload.width);
  }
  return {
    width: payload.width,
    height: payload.height,
    resolution: payload.resolution,
    origin: payload.origin,
    cells,
  };
}

/** Pixel (column, row-from-top) to world meters. Sub-pixel inputs are fine. */
export function pixelToWorld(map: MapInfo, px: number, py: number): { x: number; y: number } {
  return {
    x: map.origin.x + px * map.resolution,
    y: map.origin.y + (map.height - py) * map.resolution,
  };
}

/** World meters to (fractional) pixel coordinates. */
export function worldToPixel(map: MapInfo, x: number, y: number): { px: number; py: number } {
  return {
    px: (x - map.origin.x) / map.resolution,
    py: map.height - (y - map.origin.y) / map.resolution,
  };
}

export function inBounds(map: MapInfo, px: number, py: number): boolean {
  return px >= 0 && px < map.width && py >= 0 && py < map.height;
}

/** Cell value at a pixel, or CELL_UNKNOWN outside the raster. */
export function cellAtPixel(map: MapInfo, px: number, py: number): number {
  const col = Math.floor(px);
  const row = Math.floor(py);
  if (col < 0 || col >= map.width || row < 0 || row >= map.height) return CELL_UNKNOWN;
  return map.cells[row * map.width + col];
}
