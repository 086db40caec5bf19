// Pointer/keyboard to controller-displacement synthesis. The server does
// the real mapping (deadzone, gain, clamps); this side only turns pixels
// into meters of displacement and keys into axes.

import { ControllerInput } from "./protocol.js";

/** meters of controller displacement per pixel of drag */
export const DEFAULT_DRAG_SCALE = 0.003;

export interface PointerPoint {
  x: number;
  y: number;
}

/**
 * One drag gesture. Screen-right is +x_c, screen-up is +z_c (climb), and
 * the scroll wheel accumulates y_c (approach toward / away from the rack).
 */
export class DragTracker {
  readonly scale: number;
  private origin: PointerPoint | null = null;
  private current: PointerPoint | null = null;
  private wheelMeters = 0;

  constructor(scale: number = DEFAULT_DRAG_SCALE) {
    if (!(scale > 0)) throw new Error(`drag scale must be > 0, got ${scale}`);
    this.scale = scale;
  }

  get active(): boolean {
    return this.origin !== null;
  }

  /** Begin a gesture; the server should get a capture_reference here. */
  down(x: number, y: number): void {
    this.origin = { x, y };
    this.current = { x, y };
    this.wheelMeters = 0;
  }

  move(x: number, y: number): void {
    if (this.origin === null) return;
    this.current = { x, y };
  }

  wheel(deltaY: number): void {
    if (this.origin === null) return;
    // one notch (~100 units) nudges the approach axis by 5 cm
    this.wheelMeters += -deltaY * 0.0005;
  }

  up(): void {
    this.origin = null;
    this.current = null;
    this.wheelMeters = 0;
  }

  /** Current displacement in meters, zero when no gesture is active. */
  displacement(): { x_c: number; y_c: number; z_c: number } {
    if (this.origin === null || this.current === null) {
      return { x_c: 0, y_c: 0, z_c: 0 };
    }
    return {
      x_c: (this.current.x - this.origin.x) * this.scale,
      y_c: this.wheelMeters,
      z_c: -(this.current.y - this.origin.y) * this.scale,
    };
  }
}

/** Keyboard axes: Q/E yaw, space holds position. */
export class KeyAxes {
  private down = new Set<string>();

  set(code: string, pressed: boolean): void {
    if (pressed) this.down.add(code);
    else this.down.delete(code);
  }

  yaw(): number {
    return (this.down.has("KeyE") ? 1 : 0) - (this.down.has("KeyQ") ? 1 : 0);
  }

  trigger(): boolean {
    return this.down.has("Space");
  }
}

export function buildInput(
  drag: DragTracker,
  keys: KeyAxes,
  timestamp: number,
): ControllerInput {
  const d = drag.displacement();
  return {
    x_c: d.x_c,
    y_c: d.y_c,
    z_c: d.z_c,
    yaw_input: keys.yaw() * 0.5,
    trigger_held: keys.trigger(),
    timestamp,
  };
}

/** Arrow-style panel buttons map straight to panel command kinds. */
export function panelKindForKey(code: string): "left" | "right" | "up" | "down" | null {
  switch (code) {
    case "ArrowLeft": return "left";
    case "ArrowRight": return "right";
    case "ArrowUp": return "up";
    case "ArrowDown": return "down";
    default: return null;
  }
}

/** Slider position (0..1, already normalized by the DOM) to standoff fraction. */
export function sliderFraction(value: number): number {
  if (Number.isNaN(value)) return 0;
  return Math.min(1, Math.max(0, value));
}
