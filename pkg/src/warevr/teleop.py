"""Operator input mapping: controller displacement to velocity commands.

All functions are pure. Commands are expressed in the world frame; the
console synthesizes controller positions from pointer drags or gamepad
sticks, this layer does not care which.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .geometry import Vec3, clamp
from .robot import SOURCE_TELEOP, VelocityCommand

PANEL_LEFT = "left"
PANEL_RIGHT = "right"
PANEL_UP = "up"
PANEL_DOWN = "down"
PANEL_SET_STANDOFF = "set_standoff"

STANDOFF_GAIN = 1.0  # s^-1, proportional regulator toward the target


class NoReferenceError(RuntimeError):
    """Mapping requested before a reference pose was captured."""


@dataclass(frozen=True)
class ControllerInput:
    x_c: float = 0.0
    y_c: float = 0.0
    z_c: float = 0.0
    yaw_input: float = 0.0  # trackpad horizontal axis, [-1, 1]
    trigger_held: bool = False
    timestamp: int = 0


@dataclass(frozen=True)
class ReferencePose:
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class TeleopConfig:
    gain: float = 1.0  # velocity per meter of displacement
    deadzone: float = 0.05  # m
    v_max: float = 1.0  # m/s per axis
    yaw_rate_max: float = 0.5  # rad/s
    nudge_speed: float = 0.3  # m/s for held panel buttons
    standoff_range: tuple[float, float] = (0.8, 3.0)

    def __post_init__(self):
        if self.gain <= 0:
            raise ValueError("gain must be > 0")
        if not (0 <= self.deadzone < 0.5):
            raise ValueError("deadzone must be in [0, 0.5)")
        if self.v_max <= 0:
            raise ValueError("v_max must be > 0")
        lo, hi = self.standoff_range
        if lo > hi:
            raise ValueError("standoff_range must be ordered")

    @classmethod
    def from_dict(cls, d: Mapping) -> "TeleopConfig":
        kwargs = dict(d)
        if "standoff_range" in kwargs:
            kwargs["standoff_range"] = tuple(kwargs["standoff_range"])
        return cls(**kwargs)


@dataclass(frozen=True)
class PanelCommand:
    kind: str  # left | right | up | down | set_standoff
    fraction: float = 0.0  # slider position for set_standoff

    def __post_init__(self):
        if self.kind == PANEL_SET_STANDOFF and not (0.0 <= self.fraction <= 1.0):
            raise ValueError("slider fraction must be in [0, 1]")


@dataclass(frozen=True)
class StandoffTarget:
    distance: float  # m, desired UAV-to-rack-face distance


def capture_reference(input: ControllerInput) -> ReferencePose:
    """Fix the origin against which later displacements are measured."""
    return ReferencePose(input.x_c, input.y_c, input.z_c)


def shrink(d: float, deadzone: float) -> float:
    """Subtract the deadzone from the magnitude, zero inside it. Continuous
    at the boundary, unlike a hard cutoff."""
    mag = abs(d) - deadzone
    if mag <= 0.0:
        return 0.0
    return math.copysign(mag, d)


def map_input(input: ControllerInput, ref: ReferencePose | None, cfg: TeleopConfig) -> VelocityCommand:
    """Proportional velocity from controller displacement; trigger held
    zeroes translation and lets only yaw through."""
    if ref is None:
        raise NoReferenceError("capture_reference must run before map_input")
    yaw_rate = clamp(input.yaw_input, -1.0, 1.0) * cfg.yaw_rate_max
    if input.trigger_held:
        return VelocityCommand(v=(0.0, 0.0, 0.0), yaw_rate=yaw_rate, source=SOURCE_TELEOP)
    d = (input.x_c - ref.x, input.y_c - ref.y, input.z_c - ref.z)
    v = tuple(
        clamp(cfg.gain * shrink(axis, cfg.deadzone), -cfg.v_max, cfg.v_max) for axis in d
    )
    return VelocityCommand(v=v, yaw_rate=yaw_rate, source=SOURCE_TELEOP)


def map_panel(cmd: PanelCommand, cfg: TeleopConfig, current_standoff: float):
    """Held buttons nudge along X/Z; the slider picks a standoff target on
    the configured range. Returns VelocityCommand or StandoffTarget."""
    if cmd.kind == PANEL_LEFT:
        return VelocityCommand(v=(-cfg.nudge_speed, 0.0, 0.0), source=SOURCE_TELEOP)
    if cmd.kind == PANEL_RIGHT:
        return VelocityCommand(v=(cfg.nudge_speed, 0.0, 0.0), source=SOURCE_TELEOP)
    if cmd.kind == PANEL_UP:
        return VelocityCommand(v=(0.0, 0.0, cfg.nudge_speed), source=SOURCE_TELEOP)
    if cmd.kind == PANEL_DOWN:
        return VelocityCommand(v=(0.0, 0.0, -cfg.nudge_speed), source=SOURCE_TELEOP)
    if cmd.kind == PANEL_SET_STANDOFF:
        lo, hi = cfg.standoff_range
        return StandoffTarget(lo + (hi - lo) * cmd.fraction)
    raise ValueError(f"unknown panel command {cmd.kind!r}")


def standoff_velocity(
    current: float, target: float, outward_normal: Vec3, cfg: TeleopConfig
) -> Vec3:
    """Proportional approach along the face normal toward the target
    standoff distance. Positive error moves away from the rack."""
    rate = clamp(STANDOFF_GAIN * (target - current), -cfg.v_max, cfg.v_max)
    return (outward_normal[0] * rate, outward_normal[1] * rate, outward_normal[2] * rate)
