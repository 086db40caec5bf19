"""Wire protocol and live service: snapshots out, commands in.

Frames are UTF-8 JSON objects {kind, seq, payload} carried in standard
WebSocket messages (the transport supplies the length prefix). One global
outbound sequence counter feeds every session, so two clients observe
identical broadcast frames.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .robot import UavState
from .warehouse import (
    CANDIDATE_STATUS,
    VERIFIED_STATUS,
    DigitalTwin,
    Face,
    GroundTruth,
    SlotAddress,
    face_normal,
    iter_face_addresses,
    slot_pose,
)

log = logging.getLogger("warevr.telemetry")

PROTOCOL_VERSION = 1

KIND_HELLO = "hello"
KIND_STATE = "state_snapshot"
KIND_VIEW = "view_frame"
KIND_EVENT = "event"
KIND_COMMAND = "command"
KIND_HEARTBEAT = "heartbeat"
KIND_ERROR = "error"
FRAME_KINDS = frozenset(
    {KIND_HELLO, KIND_STATE, KIND_VIEW, KIND_EVENT, KIND_COMMAND, KIND_HEARTBEAT, KIND_ERROR}
)

STATE_HZ = 20.0
VIEW_HZ = 10.0
LOSS_TIMEOUT_S = 2.0

# Per-slot display states in view frames.
DISPLAY_PLAIN = "plain"
DISPLAY_CANDIDATE = "candidate"
DISPLAY_NEEDS_SCAN = "needs_scan"
DISPLAY_SCANNED = "scanned"

VIEW_RANGE = 6.0  # m, max distance at which a face is considered in view
_COLORS = {
    DISPLAY_PLAIN: (205, 205, 205),
    DISPLAY_CANDIDATE: (255, 190, 40),
    DISPLAY_NEEDS_SCAN: (220, 40, 40),
    DISPLAY_SCANNED: (40, 200, 60),
}


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    kind: str
    seq: int
    payload: Mapping[str, object]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seq": self.seq, "payload": dict(self.payload)}


def encode_frame(frame: Frame) -> str:
    return json.dumps(frame.to_dict(), sort_keys=True, separators=(",", ":"))


def map_payload(spec) -> dict:
    """Static floor geometry shipped once in the hello frame so clients can
    draw the top-down map without a side channel for the spec file."""
    return {
        "walls": [[x, y] for x, y in spec.wall_polyline],
        "ceiling_height": spec.ceiling_height,
        "aisle_width": spec.aisle_width,
        "racks": [
            {
                "origin": [r.origin[0], r.origin[1]],
                "orientation": r.orientation,
                "sections": r.sections,
                "tiers": r.tiers,
                "cell": [r.cell_width, r.cell_height, r.cell_depth],
                "unreachable_sides": list(r.unreachable_sides),
            }
            for r in spec.racks
        ],
    }


def decode_frame(text: str | bytes) -> Frame:
    try:
        doc = json.loads(text)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProtocolError("frame must be a JSON object")
    kind = doc.get("kind")
    if kind not in FRAME_KINDS:
        raise ProtocolError(f"unknown frame kind {kind!r}")
    seq = doc.get("seq")
    if not isinstance(seq, int) or seq < 0:
        raise ProtocolError("seq must be a non-negative integer")
    payload = doc.get("payload", {})
    if not isinstance(payload, dict):
        raise ProtocolError("payload must be an object")
    return Frame(kind=kind, seq=seq, payload=payload)


# ---------------------------------------------------------------------------
# Rack-face view rendering


@dataclass(frozen=True)
class ViewFrame:
    uav_pose: tuple[float, float, float, float]
    face: tuple[int, str] | None
    slots: tuple[tuple[SlotAddress, str], ...]
    raster: bytes  # tiny PPM, one pixel per slot
    twin_revision: int

    def to_payload(self) -> dict:
        return {
            "uav_pose": list(self.uav_pose),
            "face": None if self.face is None else {"rack": self.face[0], "side": self.face[1]},
            "slots": [
                {
                    "rack": a.rack, "side": a.side, "section": a.section, "tier": a.tier,
                    "state": s,
                }
                for a, s in self.slots
            ],
            "raster_ppm_b64": base64.b64encode(self.raster).decode("ascii"),
            "twin_revision": self.twin_revision,
        }


def _facing_face(twin: DigitalTwin, uav: UavState) -> Face | None:
    """The rack face the camera sees: UAV in front of it, looking at it,
    within range; nearest wins."""
    spec = twin.spec
    hx, hy = math.cos(uav.yaw), math.sin(uav.yaw)
    best: tuple[float, Face] | None = None
    for r in range(len(spec.racks)):
        for side in ("front", "back"):
            if side in spec.racks[r].unreachable_sides:
                continue
            n = face_normal(spec, r, side)
            if hx * n[0] + hy * n[1] > -0.5:  # must look against the outward normal
                continue
            rack = spec.racks[r]
            center = slot_pose(twin, SlotAddress(r, side, 0, 0))
            # Distance from the face plane along its normal.
            d = (uav.x - center.x) * n[0] + (uav.y - center.y) * n[1]
            if d <= 0 or d > VIEW_RANGE:
                continue
            # Lateral containment along the face's own section axis (its
            # direction flips between front and back faces).
            last = slot_pose(twin, SlotAddress(r, side, rack.sections - 1, 0))
            ux, uy = last.x - center.x, last.y - center.y
            span = math.hypot(ux, uy)
            if span > 0:
                ux, uy = ux / span, uy / span
            lat = (uav.x - center.x) * ux + (uav.y - center.y) * uy
            if not (-rack.cell_width <= lat <= span + rack.cell_width):
                continue
            if best is None or d < best[0]:
                best = (d, Face(r, side))
    return best[1] if best else None


def render_view(
    twin: DigitalTwin,
    truth: GroundTruth,
    uav: UavState,
    targets: frozenset = frozenset(),
) -> ViewFrame:
    """Deterministic orthographic projection of the rack face in front of
    the UAV, with per-slot display states."""
    face = _facing_face(twin, uav)
    slots: list[tuple[SlotAddress, str]] = []
    if face is not None:
        for addr in iter_face_addresses(twin.spec, face.rack, face.side):
            slot = twin.slot(addr)
            if slot.status == VERIFIED_STATUS:
                state = DISPLAY_SCANNED
            elif addr in targets:
                state = DISPLAY_NEEDS_SCAN
            elif slot.status == CANDIDATE_STATUS:
                state = DISPLAY_CANDIDATE
            else:
                state = DISPLAY_PLAIN
            slots.append((addr, state))
    raster = _render_ppm(twin, face, dict(slots))
    return ViewFrame(
        uav_pose=(uav.x, uav.y, uav.z, uav.yaw),
        face=None if face is None else (face.rack, face.side),
        slots=tuple(slots),
        raster=raster,
        twin_revision=twin.revision,
    )


def _render_ppm(twin: DigitalTwin, face: Face | None, states: dict) -> bytes:
    if face is None:
        return b"P6 1 1 255\n\x00\x00\x00"
    rack = twin.spec.racks[face.rack]
    w, h = rack.sections, rack.tiers
    body = bytearray()
    for tier in range(h - 1, -1, -1):  # top row first
        for section in range(w):
            addr = SlotAddress(face.rack, face.side, section, tier)
            body.extend(_COLORS[states.get(addr, DISPLAY_PLAIN)])
    return b"P6 %d %d 255\n" % (w, h) + bytes(body)


class SnapshotStore:
    """Content-addressed blobs standing in for pallet photos."""

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else None
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
        self._mem: dict[str, bytes] = {}

    def save(self, blob: bytes) -> str:
        ref = "snap-" + hashlib.sha256(blob).hexdigest()[:16]
        if self.root is not None:
            path = self.root / f"{ref}.ppm"
            if not path.exists():
                path.write_bytes(blob)
        else:
            self._mem[ref] = blob
        return ref

    def load(self, ref: str) -> bytes:
        if self.root is not None:
            return (self.root / f"{ref}.ppm").read_bytes()
        return self._mem[ref]


# ---------------------------------------------------------------------------
# Connection-loss detection


@dataclass
class ConnectionMonitor:
    """Tracks inbound liveness on whatever clock the caller supplies, which
    lets tests drive it with simulated time."""

    timeout_s: float = LOSS_TIMEOUT_S
    last_inbound: float | None = None

    def touch(self, now: float) -> None:
        self.last_inbound = now

    def lost(self, now: float) -> bool:
        if self.last_inbound is None:
            return False
        return (now - self.last_inbound) > self.timeout_s


def detect_connection_loss(session: ConnectionMonitor, now: float) -> bool:
    return session.lost(now)


# ---------------------------------------------------------------------------
# WebSocket service


@dataclass
class ServeConfig:
    host: str = "127.0.0.1"
    port: int = 8787
    state_hz: float = STATE_HZ
    view_hz: float = VIEW_HZ
    time_scale: float = 1.0  # sim seconds per wall second


class TelemetryServer:
    """Owns the tick loop while serving; sessions talk to the sim only via
    its command queue and the broadcast channel."""

    def __init__(self, sim, config: ServeConfig | None = None):
        self.sim = sim
        self.config = config or ServeConfig()
        self._clients: set = set()
        self._seq = 0
        self._stop = asyncio.Event()
        self.bound_port: int | None = None

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _frame(self, kind: str, payload: dict) -> str:
        return encode_frame(Frame(kind, self.next_seq(), payload))

    async def _broadcast(self, text: str) -> None:
        dead = []
        for ws in self._clients:
            try:
                await ws.send(text)
            except Exception:
                dead.append(ws)
        for ws in dead:
            self._clients.discard(ws)

    async def _handler(self, websocket) -> None:
        self._clients.add(websocket)
        try:
            await websocket.send(self._frame(KIND_HELLO, {
                "protocol_version": PROTOCOL_VERSION,
                "twin_revision": self.sim.twin_revision(),
                "spec_name": self.sim.spec_name,
                "map": map_payload(self.sim.spec),
            }))
            async for message in websocket:
                try:
                    frame = decode_frame(message)
                except ProtocolError as exc:
                    await websocket.send(self._frame(KIND_ERROR, {"message": str(exc)}))
                    continue
                if frame.kind == KIND_HEARTBEAT:
                    self.sim.monitor.touch(self.sim.time)
                elif frame.kind == KIND_COMMAND:
                    self.sim.monitor.touch(self.sim.time)
                    try:
                        self.sim.enqueue_command(dict(frame.payload))
                    except Exception as exc:  # report, keep session open
                        await websocket.send(self._frame(KIND_ERROR, {"message": str(exc)}))
                else:
                    await websocket.send(self._frame(
                        KIND_ERROR, {"message": f"clients may not send {frame.kind}"}
                    ))
        finally:
            self._clients.discard(websocket)

    async def _tick_loop(self) -> None:
        from .robot import DT

        cfg = self.config
        batch = max(1, round(cfg.time_scale))
        while not self._stop.is_set():
            for _ in range(batch):
                before = self.sim.time
                events = self.sim.tick()
                after = self.sim.time
                for ev in events:
                    await self._broadcast(self._frame(KIND_EVENT, ev))
                if int(before * cfg.state_hz) != int(after * cfg.state_hz):
                    await self._broadcast(self._frame(KIND_STATE, self.sim.snapshot()))
                if int(before * cfg.view_hz) != int(after * cfg.view_hz):
                    await self._broadcast(self._frame(KIND_VIEW, self.sim.view().to_payload()))
            await asyncio.sleep(DT * batch / cfg.time_scale)

    async def run(self) -> None:
        import websockets

        try:
            server = await websockets.serve(self._handler, self.config.host, self.config.port)
        except OSError as exc:
            raise BindFailureError(f"cannot bind {self.config.host}:{self.config.port}: {exc}") from exc
        self.bound_port = next(iter(server.sockets)).getsockname()[1]
        log.info("telemetry listening on %s:%s", self.config.host, self.bound_port)
        ticker = asyncio.create_task(self._tick_loop())
        try:
            await self._stop.wait()
        finally:
            ticker.cancel()
            server.close()
            await server.wait_closed()

    def stop(self) -> None:
        self._stop.set()


class BindFailureError(OSError):
    pass


def serve(sim, config: ServeConfig | None = None) -> TelemetryServer:
    """Build the server object; callers run it with asyncio."""
    return TelemetryServer(sim, config)
