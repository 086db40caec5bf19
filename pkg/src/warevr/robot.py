"""Fixed-timestep UGV+UAV kinematics with layered safety clamps.

Deterministic update order per tick: safety override, tether-cylinder
clamp, fly-zone clamp, integration, battery. All states are immutable
values; the tick loop owns the only mutable reference.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from typing import Mapping

from .geometry import Point2, Vec3, clamp, normalize_polygon, point_in_polygon, polygon_bounds
from .warehouse import WarehouseSpec, spec_to_dict

DT = 0.02  # s, fixed integration step

UAV_V_MAX = 1.0  # m/s
UAV_YAW_RATE_MAX = 0.5  # rad/s
UGV_CRUISE_SPEED = 0.5  # m/s
UGV_SPEED_LIMIT = 1.5  # m/s

TETHER_RADIUS = 1.0  # m, cylinder around the UGV
TETHER_FLOOR_OFFSET = 0.5  # m above the deck
CEILING_MARGIN = 0.5  # m kept clear below the ceiling
RACK_INFLATION = 0.5  # m no-fly envelope around racks
FLYZONE_CELL = 0.25  # m
CLAMP_LOOKAHEAD = 0.05  # m, fly-zone approach margin

DECK_HEIGHT = 0.4  # m, UAV rest height on the UGV
DOCK_CAPTURE_XY = 0.12  # m
DOCK_CAPTURE_Z = 0.03  # m

BATTERY_FULL_DRAIN_S = 1500.0  # 25 minutes of flight
RECHARGE_RATE_FACTOR = 3.0  # contact pads charge 3x faster than drain
BATTERY_CRITICAL = 0.2

SOFT_LANDING_SPEED = 0.3  # m/s descent and horizontal convergence

DOCKED = "docked"
FLYING = "flying"
SOFT_LANDING = "soft_landing"

SOURCE_AUTONOMOUS = "autonomous"
SOURCE_TELEOP = "teleop"
SOURCE_SAFETY = "safety"

REASON_CONNECTION_LOSS = "connection_loss"
REASON_ABORT = "abort"
REASON_BATTERY_CRITICAL = "battery_critical"


class AlreadyLandedError(RuntimeError):
    pass


class OutsideMapError(ValueError):
    pass


@dataclass(frozen=True)
class VelocityCommand:
    v: Vec3 = (0.0, 0.0, 0.0)
    yaw_rate: float = 0.0
    source: str = SOURCE_AUTONOMOUS


HOVER = VelocityCommand()


@dataclass(frozen=True)
class SimEvent:
    kind: str
    data: Mapping[str, object]


@dataclass(frozen=True)
class UgvState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    speed: float = 0.0
    docked_uav: bool = True

    @property
    def deck(self) -> Vec3:
        return (self.x, self.y, DECK_HEIGHT)


@dataclass(frozen=True)
class UavState:
    x: float = 0.0
    y: float = 0.0
    z: float = DECK_HEIGHT
    yaw: float = 0.0
    velocity: Vec3 = (0.0, 0.0, 0.0)
    flight_status: str = DOCKED

    @property
    def position(self) -> Vec3:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class BatteryState:
    charge: float = 1.0
    capacity_minutes: float = 25.0


@dataclass(frozen=True)
class RobotState:
    ugv: UgvState
    uav: UavState
    battery: BatteryState
    ugv_route: tuple[Point2, ...] = ()
    landing_reason: str | None = None
    events: tuple[SimEvent, ...] = ()


class FlyZoneMap:
    """3D occupancy grid of permitted flight space, derived from the spec.

    Rack volumes inflated by RACK_INFLATION, everything outside the walls,
    and the band under the ceiling are no-fly.
    """

    def __init__(self, spec: WarehouseSpec, cell: float = FLYZONE_CELL):
        self.cell = cell
        self.derived_from = hashlib.sha256(
            json.dumps(spec_to_dict(spec), sort_keys=True).encode()
        ).hexdigest()[:16]
        walls = normalize_polygon(list(spec.wall_polyline))
        x_min, y_min, x_max, y_max = polygon_bounds(walls)
        self.x0 = x_min - cell
        self.y0 = y_min - cell
        self.nx = int(math.ceil((x_max - x_min) / cell)) + 2
        self.ny = int(math.ceil((y_max - y_min) / cell)) + 2
        self.nz = int(math.ceil(spec.ceiling_height / cell))
        self.z_max = spec.ceiling_height - CEILING_MARGIN

        rack_frames = []
        for rack in spec.racks:
            c, s = math.cos(-rack.orientation), math.sin(-rack.orientation)
            rack_frames.append((rack.origin, c, s, rack.length, rack.cell_depth / 2.0, rack.height))

        blocked_2d = bytearray(self.nx * self.ny)  # bit 1 = outside walls
        rack_top = [0.0] * (self.nx * self.ny)  # blocking height per column
        for iy in range(self.ny):
            wy = self.y0 + (iy + 0.5) * cell
            for ix in range(self.nx):
                wx = self.x0 + (ix + 0.5) * cell
                idx = ix + self.nx * iy
                if not point_in_polygon((wx, wy), walls):
                    blocked_2d[idx] = 1
                    continue
                for (origin, c, s, length, half_d, height) in rack_frames:
                    dx, dy = wx - origin[0], wy - origin[1]
                    lx = c * dx - s * dy
                    ly = s * dx + c * dy
                    ex = lx - clamp(lx, 0.0, length)
                    ey = ly - clamp(ly, -half_d, half_d)
                    if ex * ex + ey * ey <= RACK_INFLATION * RACK_INFLATION:
                        top = height + RACK_INFLATION
                        if top > rack_top[idx]:
                            rack_top[idx] = top

        grid = bytearray(self.nx * self.ny * self.nz)
        for iz in range(self.nz):
            wz = (iz + 0.5) * cell
            layer = iz * self.nx * self.ny
            above_ceiling = wz > self.z_max
            for idx in range(self.nx * self.ny):
                if above_ceiling or blocked_2d[idx] or wz < rack_top[idx]:
                    grid[layer + idx] = 1
        self._grid = bytes(grid)

    def covers(self, pos: Vec3) -> bool:
        ix = int((pos[0] - self.x0) / self.cell)
        iy = int((pos[1] - self.y0) / self.cell)
        iz = int(pos[2] / self.cell)
        return 0 <= ix < self.nx and 0 <= iy < self.ny and 0 <= iz < self.nz

    def flyable(self, pos: Vec3) -> bool:
        """No-fly for any position outside the grid."""
        ix = int((pos[0] - self.x0) / self.cell)
        iy = int((pos[1] - self.y0) / self.cell)
        iz = int(pos[2] / self.cell)
        if not (0 <= ix < self.nx and 0 <= iy < self.ny and 0 <= iz < self.nz):
            return False
        return self._grid[ix + self.nx * (iy + self.ny * iz)] == 0


def clamp_to_cylinder(uav_pos: Vec3, ugv_pos: Point2, cmd_v: Vec3, radius: float = TETHER_RADIUS) -> Vec3:
    """Zero the outward radial velocity when the motion would exit the
    vertical tether cylinder; tangential and vertical parts pass through."""
    if radius <= 0:
        raise ValueError("radius must be > 0")
    rx = uav_pos[0] - ugv_pos[0]
    ry = uav_pos[1] - ugv_pos[1]
    nx_ = rx + cmd_v[0] * DT
    ny_ = ry + cmd_v[1] * DT
    if nx_ * nx_ + ny_ * ny_ <= radius * radius:
        return cmd_v
    r = math.hypot(rx, ry)
    if r == 0.0:
        return cmd_v
    ux, uy = rx / r, ry / r
    radial = cmd_v[0] * ux + cmd_v[1] * uy
    if radial <= 0.0:
        return cmd_v
    return (cmd_v[0] - radial * ux, cmd_v[1] - radial * uy, cmd_v[2])


def clamp_to_flyzone(zone: FlyZoneMap, pos: Vec3, cmd_v: Vec3, dt: float = DT) -> Vec3:
    """Zero, axis by axis, any velocity component whose motion would enter a
    no-fly cell within a small lookahead margin."""
    if not zone.covers(pos):
        raise OutsideMapError(f"position {pos} outside fly-zone map")
    vx, vy, vz = cmd_v
    if vx != 0.0:
        step = vx * dt + math.copysign(CLAMP_LOOKAHEAD, vx)
        if not zone.flyable((pos[0] + step, pos[1], pos[2])):
            vx = 0.0
    if vy != 0.0:
        step = vy * dt + math.copysign(CLAMP_LOOKAHEAD, vy)
        if not zone.flyable((pos[0], pos[1] + step, pos[2])):
            vy = 0.0
    if vz != 0.0:
        step = vz * dt + math.copysign(CLAMP_LOOKAHEAD, vz)
        if not zone.flyable((pos[0], pos[1], pos[2] + step)):
            vz = 0.0
    # Guard diagonal corner-cutting: the combined motion must stay flyable.
    if (vx or vy or vz) and not zone.flyable((pos[0] + vx * dt, pos[1] + vy * dt, pos[2] + vz * dt)):
        return (0.0, 0.0, 0.0)
    return (vx, vy, vz)


def trigger_soft_landing(state: RobotState, reason: str) -> RobotState:
    """Hand the UAV to the autonomous descent profile; commands are ignored
    until it docks."""
    if state.uav.flight_status != FLYING:
        raise AlreadyLandedError(f"cannot soft-land from {state.uav.flight_status}")
    uav = replace(state.uav, flight_status=SOFT_LANDING, velocity=(0.0, 0.0, 0.0))
    event = SimEvent("soft_landing", {"reason": reason})
    return replace(state, uav=uav, landing_reason=reason, events=state.events + (event,))


def dock_recharge(state: RobotState, dt: float = DT) -> RobotState:
    """Contact-pad charging at triple the drain rate, saturating at full."""
    if state.uav.flight_status != DOCKED:
        return state
    charge = min(1.0, state.battery.charge + RECHARGE_RATE_FACTOR * dt / BATTERY_FULL_DRAIN_S)
    return replace(state, battery=replace(state.battery, charge=charge))


def takeoff(state: RobotState) -> RobotState:
    """Docked -> Flying transition; the UAV lifts from the deck under its
    next velocity commands."""
    if state.uav.flight_status != DOCKED:
        raise RuntimeError(f"takeoff requires docked UAV, status {state.uav.flight_status}")
    deck = state.ugv.deck
    uav = replace(
        state.uav, x=deck[0], y=deck[1], z=deck[2], flight_status=FLYING, velocity=(0.0, 0.0, 0.0)
    )
    ugv = replace(state.ugv, docked_uav=False)
    return replace(
        state, uav=uav, ugv=ugv, landing_reason=None, events=state.events + (SimEvent("takeoff", {}),)
    )


def set_ugv_route(state: RobotState, route: tuple[Point2, ...]) -> RobotState:
    return replace(state, ugv_route=route)


def initial_state(start: Point2 = (0.0, 0.0), heading: float = 0.0, charge: float = 1.0) -> RobotState:
    ugv = UgvState(x=start[0], y=start[1], heading=heading)
    uav = UavState(x=start[0], y=start[1], z=DECK_HEIGHT)
    return RobotState(ugv=ugv, uav=uav, battery=BatteryState(charge=charge))


def step(
    state: RobotState,
    cmd: VelocityCommand,
    dt: float = DT,
    zone: FlyZoneMap | None = None,
    ceiling: float | None = None,
) -> RobotState:
    """Advance one tick. Commands are clamped, never rejected; a ClampEvent
    records each intervention."""
    events: list[SimEvent] = []
    vx, vy, vz = cmd.v
    yaw_rate = cmd.yaw_rate
    if not (math.isfinite(vx) and math.isfinite(vy) and math.isfinite(vz) and math.isfinite(yaw_rate)):
        events.append(SimEvent("clamp", {"reason": "non_finite_command"}))
        vx = vx if math.isfinite(vx) else 0.0
        vy = vy if math.isfinite(vy) else 0.0
        vz = vz if math.isfinite(vz) else 0.0
        yaw_rate = yaw_rate if math.isfinite(yaw_rate) else 0.0

    ugv, route = _step_ugv(state, dt)
    uav = state.uav
    battery = state.battery
    landing_reason = state.landing_reason

    if uav.flight_status == DOCKED:
        if cmd.source != SOURCE_SAFETY and (vx or vy or vz or yaw_rate):
            events.append(SimEvent("clamp", {"reason": "command_while_docked"}))
        deck = ugv.deck
        uav = replace(uav, x=deck[0], y=deck[1], z=deck[2], velocity=(0.0, 0.0, 0.0))
        charge = min(1.0, battery.charge + RECHARGE_RATE_FACTOR * dt / BATTERY_FULL_DRAIN_S)
        battery = replace(battery, charge=charge)
        return replace(
            state,
            ugv=replace(ugv, docked_uav=True),
            uav=uav,
            battery=battery,
            ugv_route=route,
            events=tuple(events),
        )

    if uav.flight_status == SOFT_LANDING:
        if cmd.source != SOURCE_SAFETY and (vx or vy or vz or yaw_rate):
            events.append(SimEvent("clamp", {"reason": "command_during_soft_landing"}))
        vx, vy, vz = _landing_velocity(uav, ugv)
        yaw_rate = 0.0
    else:
        speed = math.sqrt(vx * vx + vy * vy + vz * vz)
        if speed > UAV_V_MAX:
            scale = UAV_V_MAX / speed
            vx, vy, vz = vx * scale, vy * scale, vz * scale
        yaw_rate = clamp(yaw_rate, -UAV_YAW_RATE_MAX, UAV_YAW_RATE_MAX)
        floor = ugv.deck[2] + TETHER_FLOOR_OFFSET
        if uav.z <= floor and vz < 0.0:
            vz = 0.0
        if ceiling is not None and uav.z >= ceiling - CEILING_MARGIN and vz > 0.0:
            vz = 0.0
        clamped = clamp_to_cylinder(uav.position, (ugv.x, ugv.y), (vx, vy, vz))
        if clamped != (vx, vy, vz):
            events.append(SimEvent("clamp", {"reason": "tether_cylinder"}))
        vx, vy, vz = clamped
        if zone is not None:
            clamped = clamp_to_flyzone(zone, uav.position, (vx, vy, vz), dt)
            if clamped != (vx, vy, vz):
                events.append(SimEvent("clamp", {"reason": "fly_zone"}))
            vx, vy, vz = clamped

    nx_ = uav.x + vx * dt
    ny_ = uav.y + vy * dt
    nz_ = uav.z + vz * dt
    # Tether is a hard guarantee: tangential motion at the boundary gets its
    # second-order outward drift projected back. The projection must never
    # push the UAV into a no-fly cell (a moving UGV could otherwise drag it).
    dx, dy = nx_ - ugv.x, ny_ - ugv.y
    r = math.hypot(dx, dy)
    if r > TETHER_RADIUS and uav.flight_status == FLYING:
        scale = TETHER_RADIUS / r
        px = ugv.x + dx * scale
        py = ugv.y + dy * scale
        if zone is None:
            nx_, ny_ = px, py
        else:
            # Take the largest step toward the boundary that stays flyable;
            # fractions keep the contraction monotone when the full target
            # is blocked (the UGV may sit somewhere the UAV cannot follow).
            for frac in (1.0, 0.5, 0.25, 0.125):
                cx = nx_ + (px - nx_) * frac
                cy = ny_ + (py - ny_) * frac
                if zone.flyable((cx, cy, nz_)):
                    nx_, ny_ = cx, cy
                    break
    yaw = _wrap_angle(uav.yaw + yaw_rate * dt)

    docked_now = False
    if uav.flight_status == SOFT_LANDING:
        deck = ugv.deck
        if math.hypot(nx_ - deck[0], ny_ - deck[1]) <= DOCK_CAPTURE_XY and nz_ <= deck[2] + DOCK_CAPTURE_Z:
            nx_, ny_, nz_ = deck
            docked_now = True
            events.append(SimEvent("docked", {"reason": state.landing_reason or ""}))

    uav = replace(
        uav,
        x=nx_,
        y=ny_,
        z=nz_,
        yaw=yaw,
        velocity=(vx, vy, vz),
        flight_status=DOCKED if docked_now else uav.flight_status,
    )
    charge = max(0.0, battery.charge - dt / BATTERY_FULL_DRAIN_S)
    battery = replace(battery, charge=charge)
    new_state = replace(
        state,
        ugv=replace(ugv, docked_uav=docked_now),
        uav=uav,
        battery=battery,
        ugv_route=route,
        landing_reason=None if docked_now else landing_reason,
        events=tuple(events),
    )
    if charge == 0.0 and uav.flight_status == FLYING:
        new_state = trigger_soft_landing(new_state, REASON_BATTERY_CRITICAL)
    return new_state


def _step_ugv(state: RobotState, dt: float) -> tuple[UgvState, tuple[Point2, ...]]:
    """Advance the UGV along its route; returns (state, remaining route)."""
    ugv = state.ugv
    route = state.ugv_route
    if not route:
        return replace(ugv, speed=0.0), route
    tx, ty = route[0]
    dx, dy = tx - ugv.x, ty - ugv.y
    dist = math.hypot(dx, dy)
    max_step = min(UGV_CRUISE_SPEED, UGV_SPEED_LIMIT) * dt
    if dist <= max_step:
        nx_, ny_, speed, remaining = tx, ty, dist / dt, route[1:]
    else:
        nx_ = ugv.x + dx / dist * max_step
        ny_ = ugv.y + dy / dist * max_step
        speed, remaining = max_step / dt, route
    heading = math.atan2(dy, dx) if dist > 1e-9 else ugv.heading
    return replace(ugv, x=nx_, y=ny_, heading=heading, speed=speed), remaining


def _landing_velocity(uav: UavState, ugv: UgvState) -> Vec3:
    deck = ugv.deck
    dx, dy = deck[0] - uav.x, deck[1] - uav.y
    dist = math.hypot(dx, dy)
    if dist > 1e-9:
        h_speed = min(SOFT_LANDING_SPEED, dist / DT)
        vx = dx / dist * h_speed
        vy = dy / dist * h_speed
    else:
        vx = vy = 0.0
    if uav.z > deck[2]:
        vz = -min(SOFT_LANDING_SPEED, (uav.z - deck[2]) / DT)
    else:
        vz = 0.0
    return (vx, vy, vz)


def _wrap_angle(a: float) -> float:
    while a > math.pi:
        a -= 2 * math.pi
    while a < -math.pi:
        a += 2 * math.pi
    return a
