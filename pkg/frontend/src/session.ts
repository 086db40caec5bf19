// Connection state machine for one operator session. Holds the latest
// snapshot the server sent and nothing else: the console renders received
// data, it never simulates locally.

import {
  CommandPayload,
  ControllerInput,
  EventPayload,
  Frame,
  HelloPayload,
  KIND_COMMAND,
  KIND_ERROR,
  KIND_EVENT,
  KIND_HEARTBEAT,
  KIND_HELLO,
  KIND_STATE,
  KIND_VIEW,
  ProtocolError,
  StateSnapshot,
  ViewFramePayload,
  encodeFrame,
  parseFrame,
  simpleCommand,
  teleopCommand,
} from "./protocol.js";

// minimal surface shared by browser WebSocket and the `ws` package
export interface SocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: "open" | "message" | "close" | "error", fn: (ev: any) => void): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface SessionOptions {
  url: string;
  socketFactory?: SocketFactory;
  /** wall ms between heartbeats once startHeartbeat() is called */
  heartbeatMs?: number;
  maxEvents?: number;
}

type Listener = (frame: Frame) => void;

export class ConsoleSession {
  readonly url: string;
  hello: HelloPayload | null = null;
  state: StateSnapshot | null = null;
  view: ViewFramePayload | null = null;
  events: EventPayload[] = [];
  lastError: string | null = null;
  /** set when the transport dropped, not when the server lands the drone */
  closed = false;

  private socket: SocketLike | null = null;
  private readonly socketFactory: SocketFactory;
  private readonly heartbeatMs: number;
  private readonly maxEvents: number;
  private outSeq = 0;
  private lastServerSeq = -1;
  private heartbeatTimer: ReturnType<typeof setInterval> | null = null;
  private teleopTimer: ReturnType<typeof setInterval> | null = null;
  private listeners: Map<string, Listener[]> = new Map();

  constructor(opts: SessionOptions) {
    this.url = opts.url;
    this.socketFactory = opts.socketFactory ?? ((url) => new WebSocket(url) as unknown as SocketLike);
    this.heartbeatMs = opts.heartbeatMs ?? 500;
    this.maxEvents = opts.maxEvents ?? 200;
  }

  connect(): Promise<HelloPayload> {
    const socket = this.socketFactory(this.url);
    this.socket = socket;
    return new Promise((resolve, reject) => {
      socket.addEventListener("message", (ev: any) => {
        const data = typeof ev.data === "string" ? ev.data : String(ev.data);
        try {
          this.handleFrame(parseFrame(data));
        } catch (exc) {
          if (exc instanceof ProtocolError) {
            this.lastError = exc.message;
            return;
          }
          throw exc;
        }
        if (this.hello !== null) resolve(this.hello);
      });
      socket.addEventListener("close", () => {
        this.closed = true;
        this.stopHeartbeat();
        this.stopTeleop();
        reject(new Error("socket closed before hello"));
      });
      socket.addEventListener("error", (ev: any) => {
        this.lastError = String(ev?.message ?? "socket error");
      });
    });
  }

  disconnect(): void {
    this.stopHeartbeat();
    this.stopTeleop();
    this.socket?.close();
  }

  on(kind: string, fn: Listener): void {
    const arr = this.listeners.get(kind) ?? [];
    arr.push(fn);
    this.listeners.set(kind, arr);
  }

  private handleFrame(frame: Frame): void {
    if (frame.seq <= this.lastServerSeq) {
      // the server promises strictly increasing seq; flag, keep the session
      this.lastError = `server seq went backwards (${this.lastServerSeq} -> ${frame.seq})`;
    }
    this.lastServerSeq = frame.seq;
    switch (frame.kind) {
      case KIND_HELLO:
        this.hello = frame.payload as unknown as HelloPayload;
        break;
      case KIND_STATE:
        this.state = frame.payload as unknown as StateSnapshot;
        break;
      case KIND_VIEW:
        this.view = frame.payload as unknown as ViewFramePayload;
        break;
      case KIND_EVENT:
        this.events.push(frame.payload as unknown as EventPayload);
        if (this.events.length > this.maxEvents) this.events.shift();
        break;
      case KIND_ERROR:
        this.lastError = String(frame.payload.message ?? "unknown error");
        break;
      default:
        this.lastError = `server sent unexpected kind ${frame.kind}`;
    }
    for (const fn of this.listeners.get(frame.kind) ?? []) fn(frame);
  }

  private sendFrame(kind: string, payload: Record<string, unknown>): void {
    if (this.socket === null || this.closed) return;
    this.outSeq += 1;
    this.socket.send(encodeFrame({ kind, seq: this.outSeq, payload }));
  }

  sendCommand(payload: CommandPayload): void {
    this.sendFrame(KIND_COMMAND, payload);
  }

  heartbeat(): void {
    this.sendFrame(KIND_HEARTBEAT, {});
  }

  startHeartbeat(intervalMs?: number): void {
    this.stopHeartbeat();
    this.heartbeat();
    this.heartbeatTimer = setInterval(() => this.heartbeat(), intervalMs ?? this.heartbeatMs);
  }

  stopHeartbeat(): void {
    if (this.heartbeatTimer !== null) {
      clearInterval(this.heartbeatTimer);
      this.heartbeatTimer = null;
    }
  }

  /**
   * Pump manual-flight input at a fixed rate (default 20 Hz). `source`
   * returns the current controller displacement or null for "no input
   * this tick" (nothing is sent, heartbeats keep liveness).
   */
  startTeleop(source: () => ControllerInput | null, hz = 20): void {
    this.stopTeleop();
    this.teleopTimer = setInterval(() => {
      const input = source();
      if (input !== null) this.sendCommand(teleopCommand(input));
    }, 1000 / hz);
  }

  stopTeleop(): void {
    if (this.teleopTimer !== null) {
      clearInterval(this.teleopTimer);
      this.teleopTimer = null;
    }
  }

  missionPhase(): string | null {
    return this.state?.mission?.phase ?? null;
  }

  uavStatus(): string | null {
    return this.state?.uav.status ?? null;
  }

  /** Mode-panel gating: which actions are legal right now. */
  allowedActions(): Set<string> {
    const phase = this.missionPhase();
    switch (phase) {
      case null:
      case "idle":
      case "done":
      case "aborted":
        return new Set(["start_mission"]);
      case "navigating":
      case "scanning":
        return new Set(["pause", "abort"]);
      case "paused":
        return new Set(["resume", "abort"]);
      case "manual_flight":
        return new Set(["complete", "abort", "teleop", "capture_reference", "panel"]);
      default:
        // completing: landing already commanded, nothing to press
        return new Set();
    }
  }

  pause(): void { this.sendCommand(simpleCommand("pause")); }
  resume(): void { this.sendCommand(simpleCommand("resume")); }
  abort(): void { this.sendCommand(simpleCommand("abort")); }
  complete(): void { this.sendCommand(simpleCommand("complete")); }
}
