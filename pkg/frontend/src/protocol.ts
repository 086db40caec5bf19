// Wire types for the telemetry socket. The format is pinned by
// docs/protocol.schema.json and the golden captures next to it; keep this
// file boring and in sync.

export const PROTOCOL_VERSION = 1;

export const KIND_HELLO = "hello";
export const KIND_STATE = "state_snapshot";
export const KIND_VIEW = "view_frame";
export const KIND_EVENT = "event";
export const KIND_COMMAND = "command";
export const KIND_HEARTBEAT = "heartbeat";
export const KIND_ERROR = "error";

export const FRAME_KINDS = new Set([
  KIND_HELLO, KIND_STATE, KIND_VIEW, KIND_EVENT, KIND_COMMAND, KIND_HEARTBEAT, KIND_ERROR,
]);

export interface Frame {
  kind: string;
  seq: number;
  payload: Record<string, unknown>;
}

export class ProtocolError extends Error {}

export interface RackMap {
  origin: [number, number];
  orientation: number;
  sections: number;
  tiers: number;
  cell: [number, number, number];
  unreachable_sides: string[];
}

export interface FloorMap {
  walls: [number, number][];
  ceiling_height: number;
  aisle_width: number;
  racks: RackMap[];
}

export interface HelloPayload {
  protocol_version: number;
  twin_revision: number;
  spec_name: string;
  map: FloorMap;
}

export interface SlotAddress {
  rack: number;
  side: "front" | "back";
  section: number;
  tier: number;
}

export interface MissionSummary {
  mode: "full" | "partial" | "tag_search" | "visual_inspection";
  phase: string;
  verified: number;
  total: number;
  twin_revision: number;
  tick: number;
}

export interface StateSnapshot {
  time: number;
  tick: number;
  uav: { x: number; y: number; z: number; yaw: number; status: string; velocity: number[] };
  ugv: { x: number; y: number; heading: number };
  battery: number;
  twin_revision: number;
  mission: MissionSummary | null;
  slots: { rack: number; side: string; grid: string }[];
  targets: (SlotAddress & { scanned: boolean })[];
}

export type SlotDisplayState = "plain" | "candidate" | "needs_scan" | "scanned";

export interface ViewFramePayload {
  uav_pose: [number, number, number, number];
  face: { rack: number; side: string } | null;
  slots: (SlotAddress & { state: SlotDisplayState })[];
  raster_ppm_b64: string;
  twin_revision: number;
}

export interface EventPayload {
  tick: number;
  phase: string;
  event_type: string;
  payload: Record<string, unknown>;
}

export interface ControllerInput {
  x_c: number;
  y_c: number;
  z_c: number;
  yaw_input: number;
  trigger_held: boolean;
  timestamp: number;
}

// mirrors the server-side frame checks so a bad peer is caught at the edge
export function parseFrame(text: string): Frame {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (exc) {
    throw new ProtocolError(`not valid JSON: ${exc}`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new ProtocolError("frame must be a JSON object");
  }
  const frame = doc as Record<string, unknown>;
  if (!FRAME_KINDS.has(frame.kind as string)) {
    throw new ProtocolError(`unknown frame kind ${JSON.stringify(frame.kind)}`);
  }
  const seq = frame.seq;
  if (typeof seq !== "number" || !Number.isInteger(seq) || seq < 0) {
    throw new ProtocolError("seq must be a non-negative integer");
  }
  const payload = frame.payload ?? {};
  if (typeof payload !== "object" || payload === null || Array.isArray(payload)) {
    throw new ProtocolError("payload must be an object");
  }
  return { kind: frame.kind as string, seq, payload: payload as Record<string, unknown> };
}

// Sorted keys and tight separators to match the server's encoding style.
// Not byte-identical to it in general (JS prints 0.0 as "0"); the server
// parses JSON, it never compares bytes of inbound frames.
export function encodeFrame(frame: Frame): string {
  return stableStringify({ kind: frame.kind, seq: frame.seq, payload: frame.payload });
}

function stableStringify(value: unknown): string {
  if (value === null || typeof value === "number" || typeof value === "boolean") {
    return JSON.stringify(value);
  }
  if (typeof value === "string") return JSON.stringify(value);
  if (Array.isArray(value)) {
    return "[" + value.map(stableStringify).join(",") + "]";
  }
  const obj = value as Record<string, unknown>;
  const keys = Object.keys(obj).sort();
  return "{" + keys.map((k) => JSON.stringify(k) + ":" + stableStringify(obj[k])).join(",") + "}";
}

// --- command payload builders ---------------------------------------------

export type CommandPayload = Record<string, unknown> & { action: string };

export function startFullMission(): CommandPayload {
  return { action: "start_mission", mode: "full" };
}

export function startPartialMission(region: { rack: number; side: string }[]): CommandPayload {
  return { action: "start_mission", mode: "partial", region };
}

export function startTagSearch(tag: string): CommandPayload {
  return { action: "start_mission", mode: "tag_search", tag };
}

export function startVisualInspection(target: SlotAddress): CommandPayload {
  return { action: "start_mission", mode: "visual_inspection", target };
}

export function simpleCommand(action: "pause" | "resume" | "abort" | "complete" | "heartbeat"): CommandPayload {
  return { action };
}

export function teleopCommand(input: ControllerInput): CommandPayload {
  return { action: "teleop", input: { ...input } };
}

export function captureReference(input: ControllerInput): CommandPayload {
  return { action: "capture_reference", input: { ...input } };
}

export function panelCommand(kind: "left" | "right" | "up" | "down", fraction = 0): CommandPayload {
  return { action: "panel", kind, fraction };
}

export function setStandoff(fraction: number): CommandPayload {
  return { action: "panel", kind: "set_standoff", fraction: Math.min(1, Math.max(0, fraction)) };
}
