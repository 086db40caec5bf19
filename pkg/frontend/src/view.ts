// Pure render-model helpers: world-to-canvas fitting, rack outlines, slot
// poses derived from the served floor map, display-state colors, and the
// camera raster decoder. No DOM here so the whole file is testable in node.

import { FloorMap, RackMap, SlotDisplayState } from "./protocol.js";

// same palette the server bakes into the raster
export const STATE_COLORS: Record<SlotDisplayState, string> = {
  plain: "rgb(205,205,205)",
  candidate: "rgb(255,190,40)",
  needs_scan: "rgb(220,40,40)",
  scanned: "rgb(40,200,60)",
};

export const GRID_COLORS: Record<string, string> = {
  E: "rgb(235,235,235)",
  C: STATE_COLORS.candidate,
  V: STATE_COLORS.scanned,
};

export interface Transform {
  toCanvas(x: number, y: number): [number, number];
  scale: number;
}

/** Fit the wall polyline into a w x h canvas, y flipped, uniform scale. */
export function fitWalls(walls: [number, number][], w: number, h: number, margin = 20): Transform {
  const xs = walls.map((p) => p[0]);
  const ys = walls.map((p) => p[1]);
  const minX = Math.min(...xs), maxX = Math.max(...xs);
  const minY = Math.min(...ys), maxY = Math.max(...ys);
  const spanX = Math.max(maxX - minX, 1e-9);
  const spanY = Math.max(maxY - minY, 1e-9);
  const scale = Math.min((w - 2 * margin) / spanX, (h - 2 * margin) / spanY);
  const offX = (w - spanX * scale) / 2;
  const offY = (h - spanY * scale) / 2;
  return {
    scale,
    toCanvas(x: number, y: number): [number, number] {
      return [offX + (x - minX) * scale, h - offY - (y - minY) * scale];
    },
  };
}

function rot(x: number, y: number, a: number): [number, number] {
  const c = Math.cos(a), s = Math.sin(a);
  return [x * c - y * s, x * s + y * c];
}

/** Footprint corners of a rack, counterclockwise in world frame. */
export function rackCorners(rack: RackMap): [number, number][] {
  const length = rack.sections * rack.cell[0];
  const halfD = rack.cell[2] / 2;
  const local: [number, number][] = [
    [0, -halfD], [length, -halfD], [length, halfD], [0, halfD],
  ];
  return local.map(([lx, ly]) => {
    const [wx, wy] = rot(lx, ly, rack.orientation);
    return [rack.origin[0] + wx, rack.origin[1] + wy];
  });
}

export interface SlotPose {
  x: number;
  y: number;
  z: number;
  normal: [number, number];
}

/**
 * World pose of a slot's face center, computed from the served map with
 * the same convention the server uses (front face on the -Y side of the
 * rack axis before rotation).
 */
export function slotWorldPose(
  map: FloorMap, rackIndex: number, side: "front" | "back", section: number, tier: number,
): SlotPose {
  const rack = map.racks[rackIndex];
  if (rack === undefined) throw new Error(`no rack ${rackIndex}`);
  if (section < 0 || section >= rack.sections || tier < 0 || tier >= rack.tiers) {
    throw new Error(`slot out of range: rack ${rackIndex} ${side} s${section} t${tier}`);
  }
  const halfD = rack.cell[2] / 2;
  const lx = (section + 0.5) * rack.cell[0];
  const ly = side === "front" ? -halfD : halfD;
  const [wx, wy] = rot(lx, ly, rack.orientation);
  const [nx, ny] = rot(0, side === "front" ? -1 : 1, rack.orientation);
  return {
    x: rack.origin[0] + wx,
    y: rack.origin[1] + wy,
    z: (tier + 0.5) * rack.cell[1],
    normal: [nx, ny],
  };
}

export interface Raster {
  width: number;
  height: number;
  /** RGBA, row-major from the top tier down, ready for ImageData */
  rgba: Uint8ClampedArray;
}

/** Decode the view frame's binary PPM (P6, maxval 255) from base64. */
export function decodePpm(b64: string): Raster {
  const bytes = base64ToBytes(b64);
  const text = new TextDecoder("latin1").decode(bytes);
  const header = /^P6 (\d+) (\d+) 255\n/.exec(text);
  if (header === null) throw new Error("not a P6 raster");
  const width = parseInt(header[1], 10);
  const height = parseInt(header[2], 10);
  const start = header[0].length;
  if (bytes.length !== start + width * height * 3) {
    throw new Error(`raster size mismatch: ${bytes.length} bytes for ${width}x${height}`);
  }
  const rgba = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    rgba[i * 4] = bytes[start + i * 3];
    rgba[i * 4 + 1] = bytes[start + i * 3 + 1];
    rgba[i * 4 + 2] = bytes[start + i * 3 + 2];
    rgba[i * 4 + 3] = 255;
  }
  return { width, height, rgba };
}

function base64ToBytes(b64: string): Uint8Array {
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}
