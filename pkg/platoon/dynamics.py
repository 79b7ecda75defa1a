"""
Vehicle kinematics and the low-level speed/lane tracking loop.

All vehicles (CAV and HDV) share the same kinematic bicycle at 15 Hz. Pure functions:
nothing here holds state between calls except the explicit `PidMemory` value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Any

from .errors import ValidationError
from .road import RoadSpec

DT = 1.0 / 15.0


class VehicleKind(str, Enum):
    CAV = "CAV"
    HDV = "HDV"


class HighLevelAction(IntEnum):
    LANE_LEFT = 0
    IDLE = 1
    LANE_RIGHT = 2
    FASTER = 3
    SLOWER = 4


@dataclass(frozen=True)
class VehicleState:
    id: int
    lane: int
    s: float
    y: float
    heading: float = 0.0
    v: float = 0.0
    a: float = 0.0
    length: float = 5.0
    width: float = 2.0
    kind: VehicleKind = VehicleKind.HDV
    in_platoon: bool = False
    crashed: bool = False

    @property
    def radius(self) -> float:
        return 0.5 * self.length

    @property
    def wheelbase(self) -> float:
        return 0.6 * self.length

    @property
    def vx(self) -> float:
        return self.v * math.cos(self.heading)

    @property
    def vy(self) -> float:
        return self.v * math.sin(self.heading)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id, "lane": self.lane, "s": self.s, "y": self.y,
            "heading": self.heading, "v": self.v, "a": self.a,
            "length": self.length, "width": self.width, "kind": self.kind.value,
            "in_platoon": self.in_platoon, "crashed": self.crashed,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "VehicleState":
        return cls(
            id=int(d["id"]), lane=int(d["lane"]), s=float(d["s"]), y=float(d["y"]),
            heading=float(d["heading"]), v=float(d["v"]), a=float(d["a"]),
            length=float(d["length"]), width=float(d["width"]), kind=VehicleKind(d["kind"]),
            in_platoon=bool(d["in_platoon"]), crashed=bool(d["crashed"]),
        )


@dataclass(frozen=True)
class ControlCommand:
    throttle: float = 0.0
    steer: float = 0.0


@dataclass(frozen=True)
class DynamicsLimits:
    accel_min: float = -5.0
    accel_max: float = 3.0
    steer_limit: float = 0.3
    v_max: float = 30.0
    speed_step: float = 2.0

    def clamp_accel(self, a: float) -> float:
        return min(max(a, self.accel_min), self.accel_max)

    def clamp_steer(self, delta: float) -> float:
        return min(max(delta, -self.steer_limit), self.steer_limit)


@dataclass(frozen=True)
class PidGains:
    """Speed loop is a PID on the speed error. Lateral loop is a cascade:
    lateral offset -> lateral speed -> heading -> yaw rate -> steering angle."""

    speed_kp: float = 0.6
    speed_ki: float = 0.05
    speed_kd: float = 0.0
    lateral_kp: float = 1.0 / 0.6
    heading_kp: float = 1.0 / 0.2
    integral_limit: float = 10.0
    max_heading: float = math.pi / 4


@dataclass(frozen=True)
class PidMemory:
    speed_integral: float = 0.0
    prev_speed_error: float | None = None


DEFAULT_LIMITS = DynamicsLimits()
DEFAULT_GAINS = PidGains()

# Named gain sets a scenario file may select with `world.gains: <name>`.
# `literal_pd` is the plain PD pair on lateral offset and heading. It still has
# metres of lateral error four seconds into a lane change at highway speed.
GAIN_PRESETS: dict[str, PidGains] = {
    "default": DEFAULT_GAINS,
    "literal_pd": PidGains(lateral_kp=0.3, heading_kp=0.6),
}


def wrap_angle(x: float) -> float:
    """Map an angle to (-pi, pi]."""
    r = math.remainder(x, 2.0 * math.pi)
    return math.pi if r <= -math.pi else r


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


# ----------------------------
# Kinematics
# ----------------------------
def step_kinematics(
    state: VehicleState,
    cmd: ControlCommand,
    dt: float = DT,
    limits: DynamicsLimits = DEFAULT_LIMITS,
) -> VehicleState:
    """Advance one vehicle by dt under a kinematic bicycle referenced at the rear axle.

    Acceleration and steering are held constant over the step, so the path is an arc of
    curvature tan(steer)/wheelbase and its length follows the constant-acceleration profile
    (stopping at v = 0 if the command would reverse). Crashed vehicles are returned unchanged.
    """
    if not (_finite(state.s, state.y, state.heading, state.v, cmd.throttle, cmd.steer, dt) and dt > 0):
        raise ValidationError(f"non-finite state or command for vehicle {state.id}")
    if state.crashed:
        return state

    accel = limits.clamp_accel(cmd.throttle)
    steer = limits.clamp_steer(cmd.steer)
    v0 = max(state.v, 0.0)

    v1 = v0 + accel * dt
    if v1 >= 0.0:
        dist = v0 * dt + 0.5 * accel * dt * dt
        applied = accel
    else:
        # stops within the step
        dist = -v0 * v0 / (2.0 * accel)
        v1 = 0.0
        applied = -v0 / dt

    kappa = math.tan(steer) / state.wheelbase
    psi0 = state.heading
    dpsi = kappa * dist
    if abs(dpsi) < 1e-12:
        ds = dist * math.cos(psi0)
        dy = dist * math.sin(psi0)
    else:
        psi1 = psi0 + dpsi
        ds = (math.sin(psi1) - math.sin(psi0)) / kappa
        dy = (math.cos(psi0) - math.cos(psi1)) / kappa

    return VehicleState(
        id=state.id,
        lane=state.lane,
        s=state.s + ds,
        y=state.y + dy,
        heading=wrap_angle(psi0 + dpsi),
        v=v1,
        a=applied,
        length=state.length,
        width=state.width,
        kind=state.kind,
        in_platoon=state.in_platoon,
        crashed=False,
    )


# ----------------------------
# High-level action -> targets
# ----------------------------
def resolve_targets(
    action: HighLevelAction,
    state: VehicleState,
    road: RoadSpec,
    target_speed: float,
    target_lane: int,
    limits: DynamicsLimits = DEFAULT_LIMITS,
) -> tuple[float, int]:
    """Fold one high-level action into the (target speed, target lane) pair.

    Lane changes are relative to the occupied lane and clipped to the road; speed changes
    step by `limits.speed_step` from the current speed and are clipped to [0, v_max].
    """
    if not road.valid_lane(target_lane):
        raise ValidationError(f"target lane {target_lane} outside road with {road.num_lanes} lanes")
    action = HighLevelAction(action)
    if action is HighLevelAction.LANE_LEFT:
        return target_speed, road.clamp_lane(state.lane - 1)
    if action is HighLevelAction.LANE_RIGHT:
        return target_speed, road.clamp_lane(state.lane + 1)
    if action is HighLevelAction.FASTER:
        return min(max(target_speed, state.v) + limits.speed_step, limits.v_max), target_lane
    if action is HighLevelAction.SLOWER:
        return max(min(target_speed, state.v) - limits.speed_step, 0.0), target_lane
    return target_speed, target_lane


def lateral_steer(
    state: VehicleState,
    road: RoadSpec,
    target_lane: int,
    gains: PidGains = DEFAULT_GAINS,
    limits: DynamicsLimits = DEFAULT_LIMITS,
) -> float:
    e_y = road.lane_center(target_lane) - state.y
    v_ref = max(state.v, 1.0)
    v_lat = gains.lateral_kp * e_y
    heading_ref = math.asin(min(max(v_lat / v_ref, -1.0), 1.0))
    heading_ref = min(max(heading_ref, -gains.max_heading), gains.max_heading)
    yaw_rate = gains.heading_kp * wrap_angle(heading_ref - state.heading)
    return limits.clamp_steer(math.atan(state.wheelbase * yaw_rate / v_ref))


def pid_track_with_memory(
    action: HighLevelAction,
    state: VehicleState,
    road: RoadSpec,
    target_speed: float,
    target_lane: int,
    memory: PidMemory | None = None,
    gains: PidGains = DEFAULT_GAINS,
    limits: DynamicsLimits = DEFAULT_LIMITS,
    dt: float = DT,
) -> tuple[ControlCommand, PidMemory, tuple[float, int]]:
    """Stateful-by-value variant of `pid_track`: returns the command, the next speed-loop
    memory and the updated targets."""
    if not _finite(target_speed, state.v, state.y):
        raise ValidationError("non-finite tracking input")
    speed, lane = resolve_targets(action, state, road, target_speed, target_lane, limits)
    memory = memory or PidMemory()

    e_v = speed - state.v
    integral = memory.speed_integral + e_v * dt
    integral = min(max(integral, -gains.integral_limit), gains.integral_limit)
    deriv = 0.0 if memory.prev_speed_error is None else (e_v - memory.prev_speed_error) / dt
    throttle = limits.clamp_accel(gains.speed_kp * e_v + gains.speed_ki * integral + gains.speed_kd * deriv)

    steer = lateral_steer(state, road, lane, gains, limits)
    return ControlCommand(throttle, steer), PidMemory(integral, e_v), (speed, lane)


def pid_track(
    action: HighLevelAction,
    state: VehicleState,
    road: RoadSpec,
    target_speed: float,
    target_lane: int,
    gains: PidGains = DEFAULT_GAINS,
    limits: DynamicsLimits = DEFAULT_LIMITS,
) -> ControlCommand:
    cmd, _, _ = pid_track_with_memory(action, state, road, target_speed, target_lane, None, gains, limits)
    return cmd
