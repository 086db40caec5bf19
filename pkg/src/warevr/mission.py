"""Mission state machine: autonomous stocktaking, tag search with ring
expansion, and manual visual inspection.

State is an immutable value advanced by tick(); operator commands arrive
between ticks and are applied through the pause/resume/abort/manual
helpers. Requests the mission cannot execute itself (takeoff, landing,
UGV routes) are queued on robot_requests for the tick loop to apply.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

from .geometry import Pose3D, Vec3, clamp, dist2
from .inventory import InventoryRecord, InventoryStore, insert_record
from .robot import (
    DECK_HEIGHT,
    DOCKED,
    FLYING,
    HOVER,
    REASON_BATTERY_CRITICAL,
    SOURCE_AUTONOMOUS,
    TETHER_FLOOR_OFFSET,
    CEILING_MARGIN,
    UAV_V_MAX,
    UAV_YAW_RATE_MAX,
    RobotState,
    VelocityCommand,
)
from .scan import (
    DEFAULT_STANDOFF,
    DetectionCandidate,
    PreliminaryMap,
    ScanPath,
    SensorNoiseModel,
    VerificationRecord,
    default_snapshot_ref,
    detect_candidates,
    plan_scan_path,
    probe_slot,
    verify_waypoint,
)
from .warehouse import (
    VERIFIED_STATUS,
    Alley,
    DigitalTwin,
    Face,
    GroundTruth,
    SlotAddress,
    alley_for_face,
    apply_verification,
    clear_candidate,
    compute_alleys,
    face_normal,
    mark_candidates,
    nearest_alley,
    slot_pose,
)
from . import inventory as inventory_mod

IDLE = "idle"
NAVIGATING = "navigating"
SCANNING = "scanning"
PAUSED = "paused"
MANUAL_FLIGHT = "manual_flight"
COMPLETING = "completing"
ABORTED = "aborted"
DONE = "done"

TRANSITIONS: Mapping[str, frozenset] = {
    IDLE: frozenset({NAVIGATING}),
    NAVIGATING: frozenset({SCANNING, MANUAL_FLIGHT, PAUSED, ABORTED}),
    SCANNING: frozenset({NAVIGATING, PAUSED, COMPLETING, ABORTED}),
    PAUSED: frozenset({NAVIGATING, SCANNING, ABORTED}),
    MANUAL_FLIGHT: frozenset({COMPLETING, ABORTED}),
    COMPLETING: frozenset({DONE}),
    DONE: frozenset(),
    ABORTED: frozenset(),
}

MODE_FULL = "full"
MODE_PARTIAL = "partial"
MODE_TAG_SEARCH = "tag_search"
MODE_VISUAL_INSPECTION = "visual_inspection"

OPTION_ANOTHER_ALLEY = "select_another_alley"
OPTION_VISUAL_INSPECTION = "switch_to_visual_inspection"

# Mission-issued robot requests, applied by the tick loop.
REQ_TAKEOFF = "takeoff"
REQ_SOFT_LAND = "soft_land"
REQ_UGV_ROUTE = "ugv_route"

REASON_MISSION_COMPLETE = "mission_complete"

NAV_GAIN = 1.5  # s^-1 proportional approach toward targets
YAW_GAIN = 2.0


class IllegalTransitionError(RuntimeError):
    pass


class UnknownTagError(KeyError):
    pass


class BusyMissionError(RuntimeError):
    pass


class MissionOverError(RuntimeError):
    pass


@dataclass(frozen=True)
class MissionMode:
    kind: str
    region: tuple[Face, ...] = ()  # partial stocktaking selection
    tag: str = ""  # tag search target
    target: SlotAddress | None = None  # visual inspection slot

    def __post_init__(self):
        if self.kind not in (MODE_FULL, MODE_PARTIAL, MODE_TAG_SEARCH, MODE_VISUAL_INSPECTION):
            raise ValueError(f"unknown mode {self.kind!r}")
        if self.kind == MODE_PARTIAL and not self.region:
            raise ValueError("partial mode needs a non-empty region")
        if self.kind == MODE_TAG_SEARCH and not self.tag:
            raise ValueError("tag search needs a tag")
        if self.kind == MODE_VISUAL_INSPECTION and self.target is None:
            raise ValueError("visual inspection needs a target slot")


def full_mode() -> MissionMode:
    return MissionMode(MODE_FULL)


def partial_mode(region: tuple[Face, ...]) -> MissionMode:
    return MissionMode(MODE_PARTIAL, region=tuple(region))


def tag_search_mode(tag: str) -> MissionMode:
    return MissionMode(MODE_TAG_SEARCH, tag=tag)


def visual_inspection_mode(target: SlotAddress) -> MissionMode:
    return MissionMode(MODE_VISUAL_INSPECTION, target=target)


@dataclass(frozen=True)
class Progress:
    verified: int = 0
    total: int = 0


@dataclass(frozen=True)
class MissionEvent:
    tick: int
    phase: str
    event_type: str
    payload: Mapping[str, object]

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "phase": self.phase,
            "event_type": self.event_type,
            "payload": dict(self.payload),
        }


@dataclass(frozen=True)
class TagSearchState:
    tag: str
    origin: SlotAddress
    ring: int
    visited: frozenset
    alley_index: int
    queue: tuple[SlotAddress, ...] = ()


@dataclass(frozen=True)
class SearchResult:
    found: bool
    address: SlotAddress | None = None
    options: tuple[str, ...] = ()


@dataclass
class MissionConfig:
    seed: int = 0
    noise: SensorNoiseModel = field(default_factory=SensorNoiseModel)
    standoff: float = DEFAULT_STANDOFF
    dwell_s: float = 3.0
    battery_critical: float = 0.2
    arrive_tol: float = 0.04
    yaw_tol: float = 0.2
    cruise_z: float = 1.2
    mission_id: int = 1
    store: InventoryStore | None = None
    search_alley: int | None = None
    snapshot: Callable[[SlotAddress, str], str] | None = None


@dataclass(frozen=True)
class MissionState:
    mode: MissionMode
    phase: str
    twin: DigitalTwin
    truth: GroundTruth
    config: MissionConfig = field(repr=False, compare=False)
    rng: random.Random = field(repr=False, compare=False)
    scan_path: ScanPath | None = None
    candidate_map: Mapping[SlotAddress, DetectionCandidate] = field(default_factory=dict)
    progress: Progress = Progress()
    event_log: tuple[MissionEvent, ...] = ()
    tick_count: int = 0
    alleys: tuple[Alley, ...] = ()
    transit: tuple[Vec3, ...] = ()
    dwell_left: float = 0.0
    paused_from: str | None = None
    manual_cmd: VelocityCommand = HOVER
    manual_hold: bool = False
    standoff_target: float | None = None
    recharging: bool = False
    robot_requests: tuple = ()
    search: TagSearchState | None = None
    search_result: SearchResult | None = None

    @property
    def active(self) -> bool:
        return self.phase not in (DONE, ABORTED)


def _addr_dict(addr: SlotAddress) -> dict:
    return {"rack": addr.rack, "side": addr.side, "section": addr.section, "tier": addr.tier}


def append_event(state: MissionState, event_type: str, payload: Mapping | None = None) -> MissionState:
    ev = MissionEvent(state.tick_count, state.phase, event_type, dict(payload or {}))
    return replace(state, event_log=state.event_log + (ev,))


def _set_phase(state: MissionState, new_phase: str, **extra) -> MissionState:
    if new_phase not in TRANSITIONS[state.phase]:
        raise IllegalTransitionError(f"{state.phase} -> {new_phase}")
    state = replace(state, phase=new_phase)
    return append_event(state, "phase_change", {"to": new_phase, **extra})


def _request(state: MissionState, kind: str, payload=None) -> MissionState:
    return replace(state, robot_requests=state.robot_requests + ((kind, payload),))


def mode_faces(spec, mode: MissionMode) -> list[Face]:
    if mode.kind == MODE_PARTIAL:
        return list(mode.region)
    return [
        Face(r, side)
        for r in range(len(spec.racks))
        for side in ("front", "back")
        if side not in spec.racks[r].unreachable_sides
    ]


def start_mission(
    mode: MissionMode, twin: DigitalTwin, truth: GroundTruth, config: MissionConfig
) -> MissionState:
    """Build the initial state for a mission; phase starts Idle and the
    first tick requests takeoff."""
    rng = random.Random(f"{config.seed}/mission")
    alleys = tuple(compute_alleys(twin.spec))
    if config.store is not None:
        config.store.register_mission(config.mission_id)
    state = MissionState(
        mode=mode, phase=IDLE, twin=twin, truth=truth, config=config, rng=rng, alleys=alleys
    )

    if mode.kind in (MODE_FULL, MODE_PARTIAL):
        pmap = PreliminaryMap(())
        for face in sorted(mode_faces(twin.spec, mode), key=lambda f: (f.rack, f.side)):
            pmap = pmap.merged_with(detect_candidates(truth, twin.spec, face, config.noise, rng))
        twin = mark_candidates(twin, [c.address for c in pmap.candidates])
        if pmap.candidates:
            path = plan_scan_path(
                pmap,
                twin,
                standoff=config.standoff,
                min_z=DECK_HEIGHT + TETHER_FLOOR_OFFSET + 0.05,
                max_z=twin.spec.ceiling_height - CEILING_MARGIN - 0.05,
            )
        else:
            path = ScanPath(())
        state = replace(
            state,
            twin=twin,
            scan_path=path,
            candidate_map={c.address: c for c in pmap.candidates},
            progress=Progress(0, len(path.waypoints)),
        )
    elif mode.kind == MODE_TAG_SEARCH:
        origin = _search_origin(mode.tag, twin, config, alleys)
        alley = alley_for_face(list(alleys), Face(origin.rack, origin.side))
        state = replace(
            state,
            search=TagSearchState(
                tag=mode.tag, origin=origin, ring=0, visited=frozenset(),
                alley_index=alley.index, queue=(origin,),
            ),
            progress=Progress(0, _alley_slot_count(twin.spec, alley)),
        )
    else:  # visual inspection
        state = replace(state, progress=Progress(0, 1))

    state = append_event(state, "mission_started", {"mode": mode.kind})
    return state


def _search_origin(tag: str, twin: DigitalTwin, config: MissionConfig, alleys) -> SlotAddress:
    if config.store is not None:
        prior = inventory_mod.query_by_tag(config.store, tag)
        if prior is not None:
            return prior.address
    if config.search_alley is None:
        raise UnknownTagError(f"no prior record of {tag!r} and no alley supplied")
    alley = alleys[config.search_alley]
    face = alley.faces[0]
    rack = twin.spec.racks[face.rack]
    return SlotAddress(face.rack, face.side, rack.sections // 2, rack.tiers // 2)


def _alley_slot_count(spec, alley: Alley) -> int:
    return sum(spec.racks[f.rack].sections * spec.racks[f.rack].tiers for f in alley.faces)


# ---------------------------------------------------------------------------
# Tag-search ring expansion


def _chebyshev(origin: SlotAddress, other: SlotAddress) -> int:
    """Ring metric across both faces of an alley: grid Chebyshev distance,
    with stepping to the opposite face costing one."""
    d = max(abs(origin.section - other.section), abs(origin.tier - other.tier))
    if (origin.rack, origin.side) != (other.rack, other.side):
        d = max(d, 1)
    return d


def expand_search_area(s: TagSearchState, twin: DigitalTwin) -> list[SlotAddress]:
    """All unvisited slots of the alley at ring distance s.ring + 1 from the
    origin; empty means the alley is exhausted."""
    spec = twin.spec
    alleys = compute_alleys(spec)
    alley = alleys[s.alley_index]
    target_ring = s.ring + 1
    out: list[SlotAddress] = []
    for face in alley.faces:
        rack = spec.racks[face.rack]
        for tier in range(rack.tiers):
            for section in range(rack.sections):
                addr = SlotAddress(face.rack, face.side, section, tier)
                if addr in s.visited or addr == s.origin:
                    continue
                if _chebyshev(s.origin, addr) == target_ring:
                    out.append(addr)
    out.sort(key=lambda a: (a.rack, a.side, a.tier, a.section))
    return out


def resolve_search(s: TagSearchState, outcome: SlotAddress | None) -> SearchResult:
    """Found(address) when the probe hit the tag; otherwise both operator
    options for continuing elsewhere."""
    if outcome is not None:
        return SearchResult(found=True, address=outcome)
    return SearchResult(found=False, options=(OPTION_ANOTHER_ALLEY, OPTION_VISUAL_INSPECTION))


# ---------------------------------------------------------------------------
# Operator transitions


def pause(state: MissionState) -> MissionState:
    if state.phase not in (NAVIGATING, SCANNING):
        raise IllegalTransitionError(f"cannot pause from {state.phase}")
    state = replace(state, paused_from=state.phase)
    return _set_phase(state, PAUSED)


def resume(state: MissionState) -> MissionState:
    if state.phase != PAUSED:
        raise IllegalTransitionError(f"cannot resume from {state.phase}")
    prior = state.paused_from or NAVIGATING
    state = _set_phase(state, prior)
    return replace(state, paused_from=None)


def abort(state: MissionState) -> MissionState:
    if state.phase not in (NAVIGATING, SCANNING, PAUSED, MANUAL_FLIGHT):
        raise IllegalTransitionError(f"cannot abort from {state.phase}")
    state = append_event(state, "abort", {})
    state = _set_phase(state, ABORTED)
    return _request(state, REQ_SOFT_LAND, "abort")


def complete_manual(state: MissionState) -> MissionState:
    """Operator finishes a visual inspection; the UAV returns and lands."""
    if state.phase != MANUAL_FLIGHT:
        raise IllegalTransitionError(f"cannot complete from {state.phase}")
    state = _set_phase(state, COMPLETING)
    return _request(state, REQ_SOFT_LAND, REASON_MISSION_COMPLETE)


def set_manual_command(state: MissionState, cmd: VelocityCommand, hold: bool = False) -> MissionState:
    return replace(state, manual_cmd=cmd, manual_hold=hold)


def set_standoff_target(state: MissionState, distance: float) -> MissionState:
    return replace(state, standoff_target=distance)


# ---------------------------------------------------------------------------
# Tick


def tick(state: MissionState, robot: RobotState, dt: float) -> tuple[MissionState, VelocityCommand]:
    if not state.active:
        raise MissionOverError(state.phase)
    state = replace(state, tick_count=state.tick_count + 1, robot_requests=())

    if state.phase == IDLE:
        if robot.uav.flight_status == DOCKED:
            state = _request(state, REQ_TAKEOFF)
        state = _set_phase(state, NAVIGATING)
        state = _plan_transit(state, robot)
        state = _route_ugv_for_target(state, robot)
        return state, HOVER

    if state.phase == PAUSED:
        return state, HOVER

    if state.phase == COMPLETING:
        if robot.uav.flight_status == DOCKED:
            state = _set_phase(state, DONE)
            state = append_event(state, "mission_done", {
                "verified": state.progress.verified, "total": state.progress.total,
            })
        return state, HOVER

    if state.phase == MANUAL_FLIGHT:
        return _tick_manual(state, robot)

    # Autonomous phases: battery management precedes motion.
    state, handled, cmd = _tick_battery(state, robot)
    if handled:
        return state, cmd
    if state.phase == NAVIGATING:
        return _tick_navigating(state, robot, dt)
    return _tick_scanning(state, robot, dt)


def _tick_battery(state: MissionState, robot: RobotState) -> tuple[MissionState, bool, VelocityCommand]:
    if state.recharging:
        if robot.uav.flight_status == DOCKED and robot.battery.charge >= 1.0:
            state = replace(state, recharging=False)
            state = _request(state, REQ_TAKEOFF)
            state = append_event(state, "battery_resume", {"charge": robot.battery.charge})
        return state, True, HOVER
    if (
        robot.uav.flight_status == FLYING
        and robot.battery.charge < state.config.battery_critical
    ):
        state = replace(state, recharging=True)
        state = append_event(state, "battery_return", {"charge": robot.battery.charge})
        state = _request(state, REQ_SOFT_LAND, REASON_BATTERY_CRITICAL)
        return state, True, HOVER
    return state, False, HOVER


def _tick_manual(state: MissionState, robot: RobotState) -> tuple[MissionState, VelocityCommand]:
    # UGV shadows the UAV along the nearest aisle centerline so the tether
    # never strands the operator.
    alley = nearest_alley(list(state.alleys), (robot.uav.x, robot.uav.y))
    shadow = alley.closest_point((robot.uav.x, robot.uav.y))
    if dist2(shadow, (robot.ugv.x, robot.ugv.y)) > 0.05:
        route = _corridor_route(state.alleys, (robot.ugv.x, robot.ugv.y), shadow)
        state = _request(state, REQ_UGV_ROUTE, route)
    cmd = state.manual_cmd
    vx, vy, vz = cmd.v
    if (
        not state.manual_hold
        and state.standoff_target is not None
        and vx == 0.0 and vy == 0.0 and vz == 0.0
        and state.mode.target is not None
    ):
        # Slider regulator: approach along the face normal toward the target
        # distance; controller motion takes priority when present.
        pose = slot_pose(state.twin, state.mode.target)
        n = face_normal(state.twin.spec, state.mode.target.rack, state.mode.target.side)
        current = (robot.uav.x - pose.x) * n[0] + (robot.uav.y - pose.y) * n[1]
        rate = clamp(1.0 * (state.standoff_target - current), -UAV_V_MAX, UAV_V_MAX)
        cmd = VelocityCommand(v=(n[0] * rate, n[1] * rate, 0.0), yaw_rate=cmd.yaw_rate, source=cmd.source)
    return state, cmd


def _current_target(state: MissionState) -> Pose3D | None:
    """Where the autonomous flight is headed right now."""
    if state.transit:
        x, y, z = state.transit[0]
        return Pose3D(x, y, z, 0.0)
    if state.mode.kind in (MODE_FULL, MODE_PARTIAL):
        wp = state.scan_path.current() if state.scan_path else None
        return wp.pose if wp else None
    if state.mode.kind == MODE_TAG_SEARCH:
        if state.search is None or not state.search.queue:
            return None
        return _probe_pose(state, state.search.queue[0])
    return _probe_pose(state, state.mode.target)


def _probe_pose(state: MissionState, addr: SlotAddress) -> Pose3D:
    pose = slot_pose(state.twin, addr)
    n = face_normal(state.twin.spec, addr.rack, addr.side)
    z = clamp(
        pose.z,
        DECK_HEIGHT + TETHER_FLOOR_OFFSET + 0.05,
        state.twin.spec.ceiling_height - CEILING_MARGIN - 0.05,
    )
    yaw = math.atan2(-n[1], -n[0])
    return Pose3D(pose.x + n[0] * state.config.standoff, pose.y + n[1] * state.config.standoff, z, yaw)


def _target_alley(state: MissionState) -> Alley | None:
    addr = None
    if state.mode.kind in (MODE_FULL, MODE_PARTIAL):
        wp = state.scan_path.current() if state.scan_path else None
        addr = wp.address if wp else None
    elif state.mode.kind == MODE_TAG_SEARCH:
        addr = state.search.queue[0] if state.search and state.search.queue else None
    else:
        addr = state.mode.target
    if addr is None:
        return None
    return alley_for_face(list(state.alleys), Face(addr.rack, addr.side))


def _plan_transit(state: MissionState, robot: RobotState) -> MissionState:
    """Route around rack ends when the next target sits in a different
    aisle: out the nearest end of the current aisle, in the nearest end of
    the target one, at cruise height."""
    target_alley = _target_alley(state)
    if target_alley is None:
        return replace(state, transit=())
    here = (robot.uav.x, robot.uav.y)
    current = nearest_alley(list(state.alleys), here)
    if current.index == target_alley.index:
        return replace(state, transit=())
    goal = _current_target(replace(state, transit=()))
    goal_xy = (goal.x, goal.y) if goal else here
    z = state.config.cruise_z
    # Only same-side end pairs: a mixed pair would cut diagonally through
    # the rack row instead of crossing in the open area beyond it.
    best = None
    for pa, pb in ((current.line_a, target_alley.line_a), (current.line_b, target_alley.line_b)):
        cost = dist2(here, pa) + dist2(pa, pb) + dist2(pb, goal_xy)
        if best is None or cost < best[0]:
            best = (cost, pa, pb)
    _, pa, pb = best
    return replace(state, transit=((pa[0], pa[1], z), (pb[0], pb[1], z)))


def _corridor_route(alleys, start_xy, goal_xy) -> tuple:
    """Ground path that never crosses a rack footprint: within one aisle a
    straight run, otherwise out the nearest alley ends and across the open
    area beyond the racks."""
    sa = nearest_alley(list(alleys), start_xy)
    ga = nearest_alley(list(alleys), goal_xy)
    # Replanning can catch the UGV off-centerline (mid-crossing); enter the
    # corridor graph via the perpendicular drop before running along it.
    entry = sa.closest_point(start_xy)
    head = () if dist2(entry, start_xy) < 1e-6 else (entry,)
    if sa.index == ga.index:
        return head + (goal_xy,)
    best = None
    # Same-side end pairs only; see _plan_transit.
    for pa, pb in ((sa.line_a, ga.line_a), (sa.line_b, ga.line_b)):
        cost = dist2(entry, pa) + dist2(pa, pb) + dist2(pb, goal_xy)
        if best is None or cost < best[0]:
            best = (cost, pa, pb)
    _, pa, pb = best
    return head + (pa, pb, goal_xy)


def _route_ugv_for_target(state: MissionState, robot: RobotState) -> MissionState:
    """UGV drives the corridor polyline under the UAV's plan and parks
    abreast of the target."""
    target_alley = _target_alley(state)
    if target_alley is None:
        return state
    goal = _current_target(replace(state, transit=()))
    if goal is None:
        return state
    abreast = target_alley.closest_point((goal.x, goal.y))
    if state.transit:
        route = tuple((p[0], p[1]) for p in state.transit) + (abreast,)
    else:
        route = _corridor_route(state.alleys, (robot.ugv.x, robot.ugv.y), abreast)
    return _request(state, REQ_UGV_ROUTE, route)


def _nav_command(state: MissionState, robot: RobotState, target: Pose3D) -> VelocityCommand:
    ex = target.x - robot.uav.x
    ey = target.y - robot.uav.y
    ez = target.z - robot.uav.z
    vx = clamp(NAV_GAIN * ex, -UAV_V_MAX, UAV_V_MAX)
    vy = clamp(NAV_GAIN * ey, -UAV_V_MAX, UAV_V_MAX)
    vz = clamp(NAV_GAIN * ez, -UAV_V_MAX, UAV_V_MAX)
    yaw_err = _wrap(target.yaw - robot.uav.yaw)
    yaw_rate = clamp(YAW_GAIN * yaw_err, -UAV_YAW_RATE_MAX, UAV_YAW_RATE_MAX)
    return VelocityCommand(v=(vx, vy, vz), yaw_rate=yaw_rate, source=SOURCE_AUTONOMOUS)


def _tick_navigating(state: MissionState, robot: RobotState, dt: float) -> tuple[MissionState, VelocityCommand]:
    cfg = state.config
    if state.transit:
        tx, ty, tz = state.transit[0]
        if math.dist(robot.uav.position, (tx, ty, tz)) <= 0.15:
            state = replace(state, transit=state.transit[1:])
            state = _route_ugv_for_target(state, robot)
        target = _current_target(state)
        if target is not None and state.transit:
            return state, _nav_command(state, robot, target)

    target = _current_target(state)
    if target is None:
        # Nothing to visit (empty preliminary map); wrap up via Scanning so
        # every phase pair stays inside the declared transition table.
        state = replace(state, dwell_left=0.0)
        state = _set_phase(state, SCANNING)
        return state, HOVER

    pos_err = math.dist(robot.uav.position, (target.x, target.y, target.z))
    yaw_err = abs(_wrap(target.yaw - robot.uav.yaw))
    if pos_err <= cfg.arrive_tol and yaw_err <= cfg.yaw_tol:
        if state.mode.kind == MODE_VISUAL_INSPECTION:
            state = append_event(state, "inspection_position_reached", _addr_dict(state.mode.target))
            state = _set_phase(state, MANUAL_FLIGHT)
            return state, HOVER
        state = replace(state, dwell_left=cfg.dwell_s)
        addr = (
            state.scan_path.current().address
            if state.mode.kind in (MODE_FULL, MODE_PARTIAL)
            else state.search.queue[0]
        )
        state = append_event(state, "waypoint_reached", _addr_dict(addr))
        state = _set_phase(state, SCANNING)
        return state, HOVER
    return state, _nav_command(state, robot, target)


def _tick_scanning(state: MissionState, robot: RobotState, dt: float) -> tuple[MissionState, VelocityCommand]:
    if state.dwell_left > 0:
        return replace(state, dwell_left=state.dwell_left - dt), HOVER
    if state.mode.kind in (MODE_FULL, MODE_PARTIAL):
        if state.scan_path is None or state.scan_path.done:
            state = _set_phase(state, COMPLETING)
            state = _request(state, REQ_SOFT_LAND, REASON_MISSION_COMPLETE)
            return state, HOVER
        return _finish_scan_waypoint(state, robot)
    return _finish_probe(state, robot)


def _snapshot_fn(state: MissionState):
    return state.config.snapshot or default_snapshot_ref


def _finish_scan_waypoint(state: MissionState, robot: RobotState) -> tuple[MissionState, VelocityCommand]:
    wp = state.scan_path.current()
    cand = state.candidate_map[wp.address]
    record = verify_waypoint(
        state.truth, cand, state.config.noise, state.rng,
        catalog=state.twin.spec.box_catalog, make_snapshot=_snapshot_fn(state),
    )
    state = _absorb_record(state, record)
    state = replace(state, scan_path=state.scan_path.advanced())
    if state.scan_path.done:
        state = _set_phase(state, COMPLETING)
        state = _request(state, REQ_SOFT_LAND, REASON_MISSION_COMPLETE)
        return state, HOVER
    state = _set_phase(state, NAVIGATING)
    state = _plan_transit(state, robot)
    state = _route_ugv_for_target(state, robot)
    return state, HOVER


def _finish_probe(state: MissionState, robot: RobotState) -> tuple[MissionState, VelocityCommand]:
    search = state.search
    addr = search.queue[0]
    record = probe_slot(
        state.truth, addr, state.twin.spec, state.config.noise, state.rng,
        make_snapshot=_snapshot_fn(state),
    )
    state = _absorb_record(state, record)
    visited = search.visited | {addr}
    queue = search.queue[1:]
    state = replace(state, search=replace(search, visited=visited, queue=queue))

    if record.status == VERIFIED_STATUS and record.barcode_id == search.tag:
        result = resolve_search(state.search, addr)
        state = replace(state, search_result=result)
        state = append_event(state, "search_found", {**_addr_dict(addr), "ring": state.search.ring})
        state = _set_phase(state, COMPLETING)
        state = _request(state, REQ_SOFT_LAND, REASON_MISSION_COMPLETE)
        return state, HOVER

    if not queue:
        ring_slots = expand_search_area(state.search, state.twin)
        while not ring_slots and state.search.ring + 1 <= _max_ring(state):
            state = replace(state, search=replace(state.search, ring=state.search.ring + 1))
            ring_slots = expand_search_area(state.search, state.twin)
        if not ring_slots:
            result = resolve_search(state.search, None)
            state = replace(state, search_result=result)
            state = append_event(state, "search_exhausted", {"options": list(result.options)})
            state = _set_phase(state, COMPLETING)
            state = _request(state, REQ_SOFT_LAND, REASON_MISSION_COMPLETE)
            return state, HOVER
        state = replace(
            state,
            search=replace(state.search, ring=state.search.ring + 1, queue=tuple(ring_slots)),
        )
        state = append_event(state, "search_ring", {"ring": state.search.ring})

    state = _set_phase(state, NAVIGATING)
    state = _plan_transit(state, robot)
    state = _route_ugv_for_target(state, robot)
    return state, HOVER


def _max_ring(state: MissionState) -> int:
    spec = state.twin.spec
    return max(max(r.sections, r.tiers) for r in spec.racks)


def _absorb_record(state: MissionState, record: VerificationRecord) -> MissionState:
    state = append_event(state, "verification", {
        **_addr_dict(record.address),
        "status": record.status,
        "attempts": record.attempts,
        "barcode_id": record.barcode_id or "",
    })
    if record.status == VERIFIED_STATUS:
        twin = apply_verification(state.twin, record)
        state = replace(
            state, twin=twin,
            progress=replace(state.progress, verified=state.progress.verified + 1),
        )
        if state.config.store is not None:
            inv = InventoryRecord(
                barcode_id=record.barcode_id,
                address=record.address,
                box_type=record.classified_type,
                measured_dims=record.measured_dims,
                snapshot_ref=record.snapshot_ref,
                mission_id=state.config.mission_id,
                tick=state.tick_count,
            )
            try:
                insert_record(state.config.store, inv)
                state = append_event(state, "record_inserted", {"barcode_id": record.barcode_id})
            except inventory_mod.DuplicateRecordError:
                state = append_event(state, "record_duplicate", {"barcode_id": record.barcode_id})
    else:
        twin = clear_candidate(state.twin, record.address)
        state = replace(state, twin=twin)
        state = append_event(state, "candidate_failed", _addr_dict(record.address))
    return state


def manual_probe(state: MissionState, addr: SlotAddress, robot: RobotState) -> MissionState:
    """Laser read during manual flight when the operator lines the UAV up
    with a slot; used by the proximity scanner in the tick loop."""
    record = probe_slot(
        state.truth, addr, state.twin.spec, state.config.noise, state.rng,
        make_snapshot=_snapshot_fn(state),
    )
    return _absorb_record(state, record)


def mission_summary(state: MissionState) -> dict:
    return {
        "mode": state.mode.kind,
        "phase": state.phase,
        "verified": state.progress.verified,
        "total": state.progress.total,
        "twin_revision": state.twin.revision,
        "tick": state.tick_count,
    }


def _wrap(a: float) -> float:
    while a > math.pi:
        a -= 2 * math.pi
    while a < -math.pi:
        a += 2 * math.pi
    return a
