"""
Human-driven vehicle models: IDM car-following plus MOBIL lane-change decisions.

`HdvDriver` carries each HDV's private parameters (style, desired speed, MOBIL phase,
scheduled malfunction or scripted cut-in). Drivers are immutable; `HdvDriver.control`
returns the command together with the driver's next value.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING

from .dynamics import DEFAULT_GAINS, DEFAULT_LIMITS, ControlCommand, DynamicsLimits, PidGains, VehicleState, lateral_steer
from .errors import CollisionStateError, ConfigError, ValidationError

if TYPE_CHECKING:
    from .world import WorldState


@dataclass(frozen=True)
class IdmParams:
    v0: float = 25.0
    T: float = 1.5
    s0: float = 2.0
    a_max: float = 1.5
    b_comf: float = 3.0
    delta: float = 4.0

    def __post_init__(self):
        for name in ("T", "s0", "a_max", "b_comf"):
            if not getattr(self, name) > 0:
                raise ConfigError("must be > 0", f"idm.{name}")
        if self.v0 < 0:
            raise ConfigError("must be >= 0", "idm.v0")
        if self.delta < 1:
            raise ConfigError("must be >= 1", "idm.delta")


@dataclass(frozen=True)
class MobilParams:
    politeness: float = 0.5
    b_safe: float = 4.0
    a_thr: float = 0.2
    bias_right: float = 0.2
    period_steps: int = 15
    cooldown_steps: int = 30

    def __post_init__(self):
        if not 0.0 <= self.politeness <= 1.0:
            raise ConfigError("must be in [0, 1]", "mobil.politeness")
        if self.b_safe <= 0:
            raise ConfigError("must be > 0", "mobil.b_safe")
        if self.period_steps < 1:
            raise ConfigError("must be >= 1", "mobil.period_steps")


class DriverStyle(str, Enum):
    AGGRESSIVE = "aggressive"
    NEUTRAL = "neutral"
    CONSERVATIVE = "conservative"


class LaneDecision(str, Enum):
    KEEP = "KeepLane"
    LEFT = "ChangeLeft"
    RIGHT = "ChangeRight"


def style_params(style: DriverStyle, idm: IdmParams, mobil: MobilParams) -> tuple[IdmParams, MobilParams]:
    """Scale the base IDM/MOBIL parameters to a driving style."""
    if style is DriverStyle.AGGRESSIVE:
        return replace(idm, T=idm.T * 0.7, a_max=idm.a_max * 1.3), replace(mobil, politeness=0.1)
    if style is DriverStyle.CONSERVATIVE:
        return replace(idm, T=idm.T * 1.3, a_max=idm.a_max * 0.8), replace(mobil, politeness=0.8)
    return idm, mobil


# ----------------------------
# IDM
# ----------------------------
def idm_desired_gap(v: float, dv: float, p: IdmParams) -> float:
    """s* = s0 + max(0, v*T + v*dv / (2*sqrt(a*b))); dv = v - v_leader (approach rate)."""
    return p.s0 + max(0.0, v * p.T + v * dv / (2.0 * math.sqrt(p.a_max * p.b_comf)))


def idm_accel(v: float, dv: float, s: float, p: IdmParams) -> float:
    """IDM acceleration. `s` is the bumper gap to the leader; `math.inf` means free road."""
    if not (math.isfinite(v) and math.isfinite(dv)) or math.isnan(s):
        raise ValidationError("non-finite IDM input")
    free = 1.0 - (max(v, 0.0) / p.v0) ** p.delta if p.v0 > 0 else -1.0
    if math.isinf(s):
        return p.a_max * free
    if s <= 0:
        raise CollisionStateError(f"IDM gap must be positive, got {s:.3f}")
    return p.a_max * (free - (idm_desired_gap(v, dv, p) / s) ** 2)


def bumper_gap(rear: VehicleState, front: VehicleState) -> float:
    return (front.s - rear.s) - 0.5 * (front.length + rear.length)


def follow_accel(ego: VehicleState, leader: VehicleState | None, p: IdmParams, limits: DynamicsLimits) -> float:
    """IDM response to a (possibly missing) leader; overlapping pairs brake at the limit."""
    if leader is None:
        return idm_accel(ego.v, 0.0, math.inf, p)
    gap = bumper_gap(ego, leader)
    if gap <= 0:
        return limits.accel_min
    return idm_accel(ego.v, ego.v - leader.v, gap, p)


# ----------------------------
# MOBIL
# ----------------------------
def _pred_accel(v: VehicleState | None, leader: VehicleState | None, p: IdmParams) -> float:
    if v is None:
        return 0.0
    if leader is None:
        return idm_accel(v.v, 0.0, math.inf, p)
    gap = bumper_gap(v, leader)
    if gap <= 0:
        return -math.inf
    return idm_accel(v.v, v.v - leader.v, gap, p)


def mobil_incentive(
    ego: VehicleState, world: "WorldState", lane: int, idm: IdmParams, mobil: MobilParams
) -> float | None:
    """Incentive of moving `ego` into `lane`, or None when the safety criterion fails."""
    old_lead, old_follow = world.lane_neighbors(ego.lane, ego.s, exclude=ego.id)
    new_lead, new_follow = world.lane_neighbors(lane, ego.s, exclude=ego.id)

    if new_lead is not None and bumper_gap(ego, new_lead) <= 0:
        return None
    if new_follow is not None and bumper_gap(new_follow, ego) <= 0:
        return None

    new_follow_pred = _pred_accel(new_follow, ego, idm)
    if new_follow is not None and new_follow_pred < -mobil.b_safe:
        return None

    ego_gain = _pred_accel(ego, new_lead, idm) - _pred_accel(ego, old_lead, idm)
    new_follow_gain = new_follow_pred - _pred_accel(new_follow, new_lead, idm)
    old_follow_gain = _pred_accel(old_follow, old_lead, idm) - _pred_accel(old_follow, ego, idm)
    if not math.isfinite(ego_gain):
        return None
    others = new_follow_gain + old_follow_gain
    if not math.isfinite(others):
        others = 0.0 if others > 0 else -math.inf
    return ego_gain + mobil.politeness * others


def mobil_decide(ego_id: int, world: "WorldState", mobil: MobilParams, idm: IdmParams) -> LaneDecision:
    """Pick the adjacent lane with the best incentive above threshold; right changes get the
    keep-right bias added to their incentive. Ties keep the lane."""
    ego = world.vehicle(ego_id)
    best, best_value = LaneDecision.KEEP, -math.inf
    scores: dict[LaneDecision, float] = {}
    for decision, lane in ((LaneDecision.LEFT, ego.lane - 1), (LaneDecision.RIGHT, ego.lane + 1)):
        if not world.road.valid_lane(lane):
            continue
        incentive = mobil_incentive(ego, world, lane, idm, mobil)
        if incentive is None:
            continue
        if decision is LaneDecision.RIGHT:
            incentive += mobil.bias_right
        if incentive > mobil.a_thr:
            scores[decision] = incentive
    for decision, value in scores.items():
        if value > best_value:
            best, best_value = decision, value
    if len(scores) == 2 and scores[LaneDecision.LEFT] == scores[LaneDecision.RIGHT]:
        return LaneDecision.KEEP
    return best


# ----------------------------
# Scheduled behaviour
# ----------------------------
@dataclass(frozen=True)
class Malfunction:
    kind: str  # "stall" | "brake"
    start_step: int
    duration_steps: int = 0

    def active(self, step: int) -> bool:
        if step < self.start_step:
            return False
        return self.kind == "stall" or step < self.start_step + self.duration_steps


@dataclass(frozen=True)
class Oscillation:
    base_speed: float
    amplitude: float = 3.0
    period_s: float = 10.0
    phase_s: float = 0.0

    def speed_at(self, t: float) -> float:
        wave = math.sin(2.0 * math.pi * (t + self.phase_s) / self.period_s)
        return max(self.base_speed + self.amplitude * wave, 0.0)


@dataclass(frozen=True)
class ForcedLaneChange:
    """Cut into `lane` once the nearest vehicle behind in that lane is within `trigger_gap`."""

    lane: int
    trigger_gap: float
    triggered: bool = False


@dataclass(frozen=True)
class HdvDriver:
    style: DriverStyle
    idm: IdmParams
    mobil: MobilParams
    target_lane: int
    mobil_phase: int = 0
    cooldown_until: int = 0
    malfunction: Malfunction | None = None
    oscillation: Oscillation | None = None
    forced: ForcedLaneChange | None = None
    use_mobil: bool = True

    def desired_speed(self, t: float) -> float:
        if self.oscillation is not None:
            return self.oscillation.speed_at(t)
        return self.idm.v0

    def predicted(self, step: int, t: float, use_mobil: bool) -> "HdvDriver":
        """The driver as seen by a deterministic predictor: draws not yet realised
        (future malfunctions, pending cut-ins, speed oscillation) are removed."""
        malfunction = self.malfunction if self.malfunction and self.malfunction.active(step) else None
        forced = self.forced if self.forced and self.forced.triggered else None
        idm = self.idm
        if self.oscillation is not None:
            idm = replace(idm, v0=self.oscillation.speed_at(t))
        return replace(
            self, idm=idm, malfunction=malfunction, oscillation=None, forced=forced,
            use_mobil=self.use_mobil and use_mobil,
        )

    def to_dict(self) -> dict:
        return {
            "style": self.style.value, "v0": self.idm.v0, "target_lane": self.target_lane,
            "mobil_phase": self.mobil_phase,
            "malfunction": None if self.malfunction is None else asdict(self.malfunction),
            "oscillation": self.oscillation is not None, "forced": self.forced is not None,
        }

    def control(
        self,
        ego: VehicleState,
        world: "WorldState",
        gains: PidGains = DEFAULT_GAINS,
        limits: DynamicsLimits = DEFAULT_LIMITS,
    ) -> tuple[ControlCommand, "HdvDriver"]:
        step, t = world.step_index, world.time
        driver = self
        road = world.road

        if driver.forced is not None and not driver.forced.triggered:
            _, behind = world.lane_neighbors(driver.forced.lane, ego.s, exclude=ego.id)
            if behind is not None and bumper_gap(behind, ego) <= driver.forced.trigger_gap:
                driver = replace(
                    driver, target_lane=driver.forced.lane,
                    forced=replace(driver.forced, triggered=True),
                    cooldown_until=step + 10 * driver.mobil.cooldown_steps,
                )

        malfunctioning = driver.malfunction is not None and driver.malfunction.active(step)
        centred = abs(road.lane_center(ego.lane) - ego.y) < 0.5
        if (
            driver.use_mobil
            and not malfunctioning
            and step >= driver.cooldown_until
            and driver.target_lane == ego.lane
            and centred
            and (step - driver.mobil_phase) % driver.mobil.period_steps == 0
        ):
            decision = mobil_decide(ego.id, world, driver.mobil, driver.idm)
            if decision is not LaneDecision.KEEP:
                lane = ego.lane - 1 if decision is LaneDecision.LEFT else ego.lane + 1
                driver = replace(driver, target_lane=lane, cooldown_until=step + driver.mobil.cooldown_steps)

        if malfunctioning:
            m = driver.malfunction
            accel = -driver.idm.b_comf if m.kind == "stall" else limits.accel_min
        else:
            idm = driver.idm
            if driver.oscillation is not None:
                idm = replace(idm, v0=driver.desired_speed(t))
            leader, _ = world.lane_neighbors(ego.lane, ego.s, exclude=ego.id)
            accel = follow_accel(ego, leader, idm, limits)
            if driver.target_lane != ego.lane:
                target_leader, _ = world.lane_neighbors(driver.target_lane, ego.s, exclude=ego.id)
                accel = min(accel, follow_accel(ego, target_leader, idm, limits))

        steer = lateral_steer(ego, road, driver.target_lane, gains, limits)
        return ControlCommand(limits.clamp_accel(accel), steer), driver
