"""Tick-loop orchestration: one simulation owning robot, mission, store,
and telemetry hooks, plus headless mission runs and the scripted
visual-inspection scenario.

Commands enqueue from any producer and are applied at tick boundaries in
arrival order, which gives every run a total order on events.
"""

from __future__ import annotations

import json
import logging
import math
import random
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from . import mission as mission_mod
from . import teleop as teleop_mod
from .inventory import InventoryStore, export_report
from .mission import (
    MANUAL_FLIGHT,
    MissionConfig,
    MissionMode,
    MissionState,
    REQ_SOFT_LAND,
    REQ_TAKEOFF,
    REQ_UGV_ROUTE,
    append_event,
    start_mission,
    visual_inspection_mode,
)
from .robot import (
    DT,
    FLYING,
    HOVER,
    DOCKED,
    REASON_CONNECTION_LOSS,
    FlyZoneMap,
    RobotState,
    VelocityCommand,
    initial_state,
    set_ugv_route,
    step,
    takeoff,
    trigger_soft_landing,
)
from .scan import SensorNoiseModel
from .telemetry import ConnectionMonitor, SnapshotStore, ViewFrame, render_view, _render_ppm
from .warehouse import (
    InvalidSpecError,
    SlotAddress,
    VERIFIED_STATUS,
    WarehouseSpec,
    compute_alleys,
    generate_ground_truth,
    generate_twin,
    slot_pose,
    validate_spec,
)

log = logging.getLogger("warevr.runtime")

PROBE_RADIUS = 1.0  # m, manual-flight laser reach to a slot center
PROBE_COOLDOWN_S = 1.0
COMMAND_CADENCE_HZ = 20.0


class CommandError(ValueError):
    pass


@dataclass
class ScenarioReport:
    targets: list
    duration_s: float
    completed: bool
    phase: str

    def to_dict(self) -> dict:
        return {
            "targets": self.targets,
            "duration_s": self.duration_s,
            "completed": self.completed,
            "phase": self.phase,
        }


class Simulation:
    """Deterministic world: same (spec, seed, command trace) in, same
    events out."""

    def __init__(
        self,
        spec: WarehouseSpec,
        extras: dict | None = None,
        seed: int = 0,
        store: InventoryStore | None = None,
        snapshots: SnapshotStore | None = None,
        fill_count: int | None = None,
        fill_ratio: float = 0.5,
        clutter_ratio: float = 0.0,
        spec_name: str = "warehouse",
        noise: SensorNoiseModel | None = None,
    ):
        report = validate_spec(spec)
        if not report.ok:
            raise InvalidSpecError("; ".join(report.codes()))
        extras = extras or {}
        self.spec = spec
        self.spec_name = spec_name
        self.seed = seed
        self.noise = noise if noise is not None else SensorNoiseModel.from_dict(extras.get("sensor_noise"))
        self.teleop_cfg = teleop_mod.TeleopConfig.from_dict(extras.get("teleop", {}))
        self._twin = generate_twin(spec)
        self.truth = generate_ground_truth(
            spec, random.Random(f"{seed}/truth"), fill_count=fill_count,
            fill_ratio=fill_ratio, clutter_ratio=clutter_ratio,
        )
        self.zone = FlyZoneMap(spec)
        self.alleys = compute_alleys(spec)
        start = self.alleys[0].line_a if self.alleys else (0.0, 0.0)
        self.robot: RobotState = initial_state(start=start)
        self.mission: MissionState | None = None
        self.store = store if store is not None else InventoryStore()
        self.snapshots = snapshots if snapshots is not None else SnapshotStore()
        self.monitor = ConnectionMonitor()
        self.time = 0.0
        self.tick_no = 0
        self.targets: list[SlotAddress] = []
        self._target_times: dict = {}
        self._probe_next_ok: dict = {}
        self._commands: deque = deque()
        self._teleop_ref: teleop_mod.ReferencePose | None = None
        self._system_events: list[dict] = []
        self._last_clamp: str | None = None
        self._next_mission_id = 1

    # -- handles for telemetry ------------------------------------------------

    def twin_revision(self) -> int:
        return self.twin.revision

    @property
    def twin(self):
        return self.mission.twin if self.mission is not None else self._twin

    def enqueue_command(self, payload: dict) -> None:
        action = payload.get("action")
        if action not in (
            "start_mission", "pause", "resume", "abort", "complete",
            "teleop", "capture_reference", "panel", "heartbeat",
        ):
            raise CommandError(f"unknown action {action!r}")
        self._commands.append(payload)

    def start(self, mode: MissionMode, mission_id: int | None = None) -> None:
        """Begin a mission directly (CLI path); telemetry clients go through
        enqueue_command."""
        if self.mission is not None and self.mission.active:
            raise mission_mod.BusyMissionError("a mission is already running")
        mid = mission_id if mission_id is not None else self._next_mission_id
        self._next_mission_id = mid + 1
        config = MissionConfig(
            seed=self.seed,
            noise=self.noise,
            mission_id=mid,
            store=self.store,
            snapshot=self._make_snapshot,
            search_alley=0 if self.alleys else None,
        )
        self.mission = start_mission(mode, self.twin, self.truth, config)

    def _make_snapshot(self, addr: SlotAddress, barcode_id: str) -> str:
        """Pallet photo stand-in: the rendered face raster at verification
        time, stored content-addressed."""
        from .warehouse import Face

        twin = self.twin
        raster = _render_ppm(twin, Face(addr.rack, addr.side), {})
        return self.snapshots.save(raster + f"\n# {addr.key()} {barcode_id}".encode())

    # -- command application --------------------------------------------------

    def _apply_command(self, payload: dict) -> None:
        action = payload.get("action")
        self.monitor.touch(self.time)  # any operator traffic counts as liveness
        if action == "heartbeat":
            return
        self._log_event("command", {"action": action})
        try:
            if action == "start_mission":
                self.start(_mode_from_payload(payload, self))
            elif action == "pause":
                self._need_mission()
                self.mission = mission_mod.pause(self.mission)
            elif action == "resume":
                self._need_mission()
                self.mission = mission_mod.resume(self.mission)
            elif action == "abort":
                self._need_mission()
                self.mission = mission_mod.abort(self.mission)
                self._apply_requests()
            elif action == "complete":
                self._need_mission()
                self.mission = mission_mod.complete_manual(self.mission)
                self._apply_requests()
            elif action == "capture_reference":
                self._teleop_ref = teleop_mod.capture_reference(_input_from_payload(payload))
            elif action == "teleop":
                inp = _input_from_payload(payload)
                cmd = teleop_mod.map_input(inp, self._teleop_ref, self.teleop_cfg)
                if self.mission is not None and self.mission.active:
                    self.mission = mission_mod.set_manual_command(
                        self.mission, cmd, hold=inp.trigger_held
                    )
            elif action == "panel":
                out = teleop_mod.map_panel(
                    teleop_mod.PanelCommand(
                        kind=payload.get("kind", ""), fraction=float(payload.get("fraction", 0.0))
                    ),
                    self.teleop_cfg,
                    self._current_standoff(),
                )
                if self.mission is not None and self.mission.active:
                    if isinstance(out, teleop_mod.StandoffTarget):
                        self.mission = mission_mod.set_standoff_target(self.mission, out.distance)
                    else:
                        self.mission = mission_mod.set_manual_command(self.mission, out)
        except (mission_mod.IllegalTransitionError, mission_mod.BusyMissionError,
                teleop_mod.NoReferenceError, ValueError, KeyError) as exc:
            self._log_event("command_rejected", {"action": action, "reason": str(exc)})

    def _need_mission(self) -> None:
        if self.mission is None:
            raise mission_mod.IllegalTransitionError("no mission running")

    def _current_standoff(self) -> float:
        if self.mission is None or self.mission.mode.target is None:
            return self.teleop_cfg.standoff_range[0]
        pose = slot_pose(self.twin, self.mission.mode.target)
        from .warehouse import face_normal

        n = face_normal(self.spec, self.mission.mode.target.rack, self.mission.mode.target.side)
        return (self.robot.uav.x - pose.x) * n[0] + (self.robot.uav.y - pose.y) * n[1]

    def _log_event(self, event_type: str, payload: dict) -> None:
        if self.mission is not None:
            self.mission = append_event(self.mission, event_type, payload)
        else:
            self._system_events.append({
                "tick": self.tick_no, "phase": "idle", "event_type": event_type,
                "payload": payload,
            })

    # -- tick -----------------------------------------------------------------

    def tick(self) -> list[dict]:
        """One dt step; returns mission/system event dicts born this tick."""
        pre_len = len(self.mission.event_log) if self.mission is not None else 0
        pre_sys = len(self._system_events)
        while self._commands:
            self._apply_command(self._commands.popleft())
        if self.mission is not None and pre_len > len(self.mission.event_log):
            pre_len = 0  # a fresh mission replaced the log

        cmd = HOVER
        if self.mission is not None and self.mission.active:
            self.mission, cmd = mission_mod.tick(self.mission, self.robot, DT)
            self._apply_requests()
            self._check_connection_loss()
            self._proximity_probes()

        self.robot = step(self.robot, cmd, DT, zone=self.zone, ceiling=self.spec.ceiling_height)
        self._forward_robot_events()
        self._note_target_transitions()

        self.time += DT
        self.tick_no += 1
        out = [e for e in self._system_events[pre_sys:]]
        if self.mission is not None:
            out.extend(ev.to_dict() for ev in self.mission.event_log[pre_len:])
        return out

    def _apply_requests(self) -> None:
        for kind, payload in self.mission.robot_requests:
            if kind == REQ_TAKEOFF:
                if self.robot.uav.flight_status == DOCKED:
                    self.robot = takeoff(self.robot)
            elif kind == REQ_SOFT_LAND:
                if self.robot.uav.flight_status == FLYING:
                    self.robot = trigger_soft_landing(self.robot, payload)
            elif kind == REQ_UGV_ROUTE:
                self.robot = set_ugv_route(self.robot, tuple(payload))

    def _check_connection_loss(self) -> None:
        if (
            self.mission.phase == MANUAL_FLIGHT
            and self.robot.uav.flight_status == FLYING
            and self.monitor.lost(self.time)
        ):
            self.robot = trigger_soft_landing(self.robot, REASON_CONNECTION_LOSS)
            self._log_event("connection_loss", {"silent_for": self.time - self.monitor.last_inbound})

    def _proximity_probes(self) -> None:
        """During manual flight the laser reads any scenario target the UAV
        lines up with; a verified read flips it green."""
        if self.mission.phase != MANUAL_FLIGHT or self.robot.uav.flight_status != FLYING:
            return
        probe_list = self.targets or ([self.mission.mode.target] if self.mission.mode.target else [])
        for addr in probe_list:
            if self.twin.slot(addr).status == VERIFIED_STATUS:
                continue
            if self.time < self._probe_next_ok.get(addr, 0.0):
                continue
            pose = slot_pose(self.twin, addr)
            dx = self.robot.uav.x - pose.x
            dy = self.robot.uav.y - pose.y
            dz = self.robot.uav.z - pose.z
            if (dx * dx + dy * dy + dz * dz) ** 0.5 <= PROBE_RADIUS:
                self._probe_next_ok[addr] = self.time + PROBE_COOLDOWN_S
                self.mission = mission_mod.manual_probe(self.mission, addr, self.robot)

    def _forward_robot_events(self) -> None:
        for ev in self.robot.events:
            if ev.kind == "clamp":
                reason = ev.data.get("reason")
                if reason == self._last_clamp:
                    continue  # edge-trigger repeated clamps
                self._last_clamp = reason
            self._log_event(f"robot_{ev.kind}", dict(ev.data))
        if not any(ev.kind == "clamp" for ev in self.robot.events):
            self._last_clamp = None

    def _note_target_transitions(self) -> None:
        for addr in self.targets:
            if addr not in self._target_times and self.twin.slot(addr).status == VERIFIED_STATUS:
                self._target_times[addr] = self.time

    # -- snapshots ------------------------------------------------------------

    def snapshot(self) -> dict:
        uav = self.robot.uav
        ugv = self.robot.ugv
        doc = {
            "time": round(self.time, 6),
            "tick": self.tick_no,
            "uav": {
                "x": uav.x, "y": uav.y, "z": uav.z, "yaw": uav.yaw,
                "status": uav.flight_status, "velocity": list(uav.velocity),
            },
            "ugv": {"x": ugv.x, "y": ugv.y, "heading": ugv.heading},
            "battery": self.robot.battery.charge,
            "twin_revision": self.twin.revision,
            "mission": mission_mod.mission_summary(self.mission) if self.mission else None,
            "slots": self._slot_grids(),
            "targets": [
                {
                    "rack": a.rack, "side": a.side, "section": a.section, "tier": a.tier,
                    "scanned": self.twin.slot(a).status == VERIFIED_STATUS,
                }
                for a in self.targets
            ],
        }
        return doc

    def _slot_grids(self) -> list[dict]:
        out = []
        twin = self.twin
        for r, rack in enumerate(self.spec.racks):
            for side in ("front", "back"):
                if side in rack.unreachable_sides:
                    continue
                chars = []
                for tier in range(rack.tiers):
                    for section in range(rack.sections):
                        status = twin.slot(SlotAddress(r, side, section, tier)).status
                        chars.append({"empty": "E", "candidate": "C", "verified": "V"}[status])
                out.append({"rack": r, "side": side, "grid": "".join(chars)})
        return out

    def view(self) -> ViewFrame:
        return render_view(self.twin, self.truth, self.robot.uav, frozenset(self.targets))


def _mode_from_payload(payload: dict, sim: Simulation) -> MissionMode:
    kind = payload.get("mode")
    if kind == "full":
        return mission_mod.full_mode()
    if kind == "partial":
        from .warehouse import Face

        region = tuple(Face(f["rack"], f["side"]) for f in payload.get("region", ()))
        return mission_mod.partial_mode(region)
    if kind == "tag_search":
        return mission_mod.tag_search_mode(payload.get("tag", ""))
    if kind == "visual_inspection":
        t = payload.get("target") or {}
        return visual_inspection_mode(
            SlotAddress(t["rack"], t["side"], t["section"], t["tier"])
        )
    raise CommandError(f"unknown mission mode {kind!r}")


def _input_from_payload(payload: dict) -> teleop_mod.ControllerInput:
    d = payload.get("input", {})
    return teleop_mod.ControllerInput(
        x_c=float(d.get("x_c", 0.0)),
        y_c=float(d.get("y_c", 0.0)),
        z_c=float(d.get("z_c", 0.0)),
        yaw_input=float(d.get("yaw_input", 0.0)),
        trigger_held=bool(d.get("trigger_held", False)),
        timestamp=int(d.get("timestamp", 0)),
    )


# ---------------------------------------------------------------------------
# Headless mission runner


def run_headless(
    spec: WarehouseSpec,
    extras: dict | None,
    mode: MissionMode,
    seed: int,
    out_dir: str | Path | None = None,
    time_limit_s: float = 3600.0,
    fill_count: int | None = None,
    fill_ratio: float = 0.5,
    noise: SensorNoiseModel | None = None,
    store_path: str | Path | None = None,
) -> dict:
    """Run one mission to completion and write events/report artifacts."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    store = InventoryStore(store_path)
    snapshots = SnapshotStore(out / "snapshots" if out is not None else None)
    sim = Simulation(
        spec, extras, seed=seed, store=store, snapshots=snapshots,
        fill_count=fill_count, fill_ratio=fill_ratio, noise=noise,
    )
    sim.start(mode)
    while sim.time < time_limit_s:
        sim.tick()
        if (
            sim.mission is not None
            and not sim.mission.active
            and sim.robot.uav.flight_status == DOCKED
        ):
            break
    summary = {
        "phase": sim.mission.phase,
        "verified": sim.mission.progress.verified,
        "total": sim.mission.progress.total,
        "sim_seconds": round(sim.time, 2),
        "twin_revision": sim.twin.revision,
    }
    if sim.mission.search_result is not None:
        summary["search"] = {
            "found": sim.mission.search_result.found,
            "options": list(sim.mission.search_result.options),
        }
    if out is not None:
        _write_events(out / "events.ndjson", sim)
        mission_id = sim.mission.config.mission_id
        (out / "report.csv").write_text(export_report(store, mission_id, "csv"))
        (out / "report.json").write_text(export_report(store, mission_id, "json"))
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def _write_events(path: Path, sim: Simulation) -> None:
    with path.open("w") as fh:
        for ev in sim._system_events:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")
        if sim.mission is not None:
            for ev in sim.mission.event_log:
                fh.write(json.dumps(ev.to_dict(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Visual-inspection scenario with a scripted pilot


def pick_scenario_targets(spec: WarehouseSpec, truth, n: int, seed: int) -> list[SlotAddress]:
    """n occupied slots along one alley, deterministically sampled."""
    alleys = compute_alleys(spec)
    rng = random.Random(f"{seed}/targets")
    for alley in alleys:
        pool = sorted(
            (
                a for a in truth.occupancy
                if any((a.rack, a.side) == (f.rack, f.side) for f in alley.faces)
            ),
            key=lambda a: a.key(),
        )
        if len(pool) >= n:
            picked = rng.sample(pool, n)
            picked.sort(key=lambda a: a.key())
            return picked
    raise ValueError(f"no alley offers {n} occupied slots")


class ScriptedPilot:
    """Closed-loop autopilot posing as the operator: drags the synthetic
    controller toward each pending target, then sends complete."""

    def __init__(self, sim: Simulation, targets: list[SlotAddress]):
        self.sim = sim
        self.targets = targets
        self.sent_complete = False
        self.captured = False

    def commands(self) -> list[dict]:
        sim = self.sim
        if sim.mission is None or not sim.mission.active:
            return []
        if sim.mission.phase != MANUAL_FLIGHT:
            return [{"action": "heartbeat"}]
        if not self.captured:
            self.captured = True
            return [
                {"action": "capture_reference", "input": {"x_c": 0.0, "y_c": 0.0, "z_c": 0.0}},
            ]
        pending = [a for a in self.targets if sim.twin.slot(a).status != VERIFIED_STATUS]
        if not pending:
            if self.sent_complete:
                return [{"action": "heartbeat"}]
            self.sent_complete = True
            return [{"action": "complete"}]
        goal = self._goal_pose(pending[0])
        uav = sim.robot.uav
        cfg = sim.teleop_cfg
        d = []
        for err in (goal[0] - uav.x, goal[1] - uav.y, goal[2] - uav.z):
            v_des = max(-0.9, min(0.9, 1.2 * err))
            if abs(v_des) < 1e-3:
                d.append(0.0)
            else:
                d.append(v_des / cfg.gain + (cfg.deadzone if v_des > 0 else -cfg.deadzone))
        yaw_err = _wrap(goal[3] - uav.yaw)
        yaw_input = max(-1.0, min(1.0, 4.0 * yaw_err))
        return [{
            "action": "teleop",
            "input": {"x_c": d[0], "y_c": d[1], "z_c": d[2], "yaw_input": yaw_input},
        }]

    def _goal_pose(self, addr: SlotAddress):
        from .warehouse import face_normal

        sim = self.sim
        pose = slot_pose(sim.twin, addr)
        n = face_normal(sim.spec, addr.rack, addr.side)
        standoff = 0.85  # keeps the slot center inside the probe radius
        z = min(max(pose.z, 0.95), sim.spec.ceiling_height - 0.55)
        return (
            pose.x + n[0] * standoff,
            pose.y + n[1] * standoff,
            z,
            math.atan2(-n[1], -n[0]),
        )


def run_scenario(
    spec: WarehouseSpec,
    extras: dict | None,
    seed: int,
    targets_n: int = 5,
    script: list | None = None,
    record: bool = False,
    time_limit_s: float = 600.0,
    fill_ratio: float = 0.5,
    noise: SensorNoiseModel | None = None,
) -> tuple[ScenarioReport, list]:
    """Replay (or record) a manual visual-inspection run over n highlighted
    targets; timing reported in sim seconds."""
    sim = Simulation(spec, extras, seed=seed, fill_ratio=fill_ratio, noise=noise)
    targets = pick_scenario_targets(spec, sim.truth, targets_n, seed)
    sim.targets = targets
    t0 = targets[0]
    sim.start(visual_inspection_mode(t0))

    pilot = ScriptedPilot(sim, targets) if script is None or record else None
    replay = deque() if script is None else deque(script)
    recorded: list = []
    last_emit = -1

    while sim.time < time_limit_s:
        if pilot is not None:
            boundary = int(sim.time * COMMAND_CADENCE_HZ)
            if boundary != last_emit:
                last_emit = boundary
                for payload in pilot.commands():
                    recorded.append({"t": round(sim.time, 6), "payload": payload})
                    sim.enqueue_command(payload)
        else:
            while replay and replay[0]["t"] <= sim.time + 1e-9:
                sim.enqueue_command(dict(replay.popleft()["payload"]))
        sim.tick()
        if (
            sim.mission is not None
            and not sim.mission.active
            and sim.robot.uav.flight_status == DOCKED
        ):
            break

    duration = max(sim._target_times.values()) if len(sim._target_times) == len(targets) else sim.time
    report = ScenarioReport(
        targets=[
            {
                "rack": a.rack, "side": a.side, "section": a.section, "tier": a.tier,
                "scanned": sim.twin.slot(a).status == VERIFIED_STATUS,
                "t_scanned": round(sim._target_times[a], 2) if a in sim._target_times else None,
            }
            for a in targets
        ],
        duration_s=round(duration, 2),
        completed=all(sim.twin.slot(a).status == VERIFIED_STATUS for a in targets),
        phase=sim.mission.phase if sim.mission else "idle",
    )
    return report, recorded


def _wrap(a: float) -> float:
    while a > math.pi:
        a -= 2 * math.pi
    while a < -math.pi:
        a += 2 * math.pi
    return a
