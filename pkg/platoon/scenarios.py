"""Scenario overlays applied on top of a freshly spawned world."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .drivers import DriverStyle, ForcedLaneChange, HdvDriver, IdmParams, MobilParams, Oscillation
from .dynamics import VehicleKind, VehicleState
from .errors import ConfigError
from .world import WorldState

LOG = logging.getLogger(__name__)


class ScenarioKind(str, Enum):
    PLAIN = "Plain"
    HUMAN_INTERFERENCE = "HumanInterference"
    TRAFFIC_ACCIDENTS = "TrafficAccidents"
    FLOW_OSCILLATION = "FlowOscillation"


@dataclass(frozen=True)
class ScenarioConfig:
    kind: ScenarioKind = ScenarioKind.PLAIN
    # accidents
    wreck_offset: tuple[float, float] = (50.0, 150.0)
    wreck_extra_lane_prob: float = 0.5
    wreck_clear_radius: float = 30.0
    # interference
    cut_in_lead_distance: float = 60.0
    cut_in_gap: float = 10.0
    cut_in_speed: float = 22.0
    # oscillation
    leader_gap: float = 40.0
    oscillation_base: float = 24.0
    oscillation_amplitude: float = 3.0
    oscillation_period: float = 10.0

    def __post_init__(self):
        lo, hi = self.wreck_offset
        if not 0 <= lo <= hi:
            raise ConfigError("expected 0 <= min <= max", "scenario.wreck_offset")
        if self.oscillation_period <= 0:
            raise ConfigError("must be > 0", "scenario.oscillation_period")
        if self.cut_in_gap <= 0:
            raise ConfigError("must be > 0", "scenario.cut_in_gap")


def _without(world: WorldState, predicate) -> WorldState:
    keep = tuple(v for v in world.vehicles if not predicate(v))
    dropped = {v.id for v in world.vehicles} - {v.id for v in keep}
    drivers = {k: d for k, d in world.drivers.items() if k not in dropped}
    return replace(world, vehicles=keep, drivers=drivers)


def _with(world: WorldState, vehicles: list[VehicleState], drivers: dict[int, HdvDriver]) -> WorldState:
    merged = tuple(sorted(world.vehicles + tuple(vehicles), key=lambda v: v.id))
    return replace(world, vehicles=merged, drivers={**world.drivers, **drivers})


def _next_id(world: WorldState) -> int:
    return max((v.id for v in world.vehicles), default=-1) + 1


def _traffic_accidents(world: WorldState, cfg: ScenarioConfig, rng: np.random.Generator) -> WorldState:
    road = world.road
    lead = world.platoon()[0]
    lane = lead.lane
    centre = road.zone_start + float(rng.uniform(*cfg.wreck_offset))
    blocked = [lane]
    # a second blocked lane is only allowed if a free lane adjacent to the platoon remains
    sides = [l for l in (lane - 1, lane + 1) if road.valid_lane(l)]
    if len(sides) == 2 and rng.random() < cfg.wreck_extra_lane_prob:
        blocked.append(sides[int(rng.integers(2))])

    world = _without(
        world,
        lambda v: not v.in_platoon and v.lane in blocked and abs(v.s - centre) <= cfg.wreck_clear_radius,
    )
    vid = _next_id(world)
    # two wrecks in the platoon lane, one per extra blocked lane
    spots = [(lane, centre), (lane, centre - lead.length - 2.0)]
    spots += [(l, centre + float(rng.uniform(-3.0, 3.0))) for l in blocked[1:]]
    wrecks = [
        VehicleState(
            id=vid + k, lane=l, s=s, y=road.lane_center(l), heading=0.0, v=0.0,
            length=lead.length, width=lead.width, kind=VehicleKind.HDV, crashed=True,
        )
        for k, (l, s) in enumerate(spots)
    ]
    LOG.debug("wreck at s=%.1f lanes=%s", centre, blocked)
    return _with(world, wrecks, {})


def _human_interference(world: WorldState, cfg: ScenarioConfig, rng: np.random.Generator) -> WorldState:
    road = world.road
    lead = world.platoon()[0]
    sides = [l for l in (lead.lane - 1, lead.lane + 1) if road.valid_lane(l)]
    lane = sides[int(rng.integers(len(sides)))]
    s = lead.s + cfg.cut_in_lead_distance
    world = _without(world, lambda v: not v.in_platoon and v.lane in (lane, lead.lane) and abs(v.s - s) < 25.0)
    vid = _next_id(world)
    idm = IdmParams(v0=cfg.cut_in_speed)
    cutter = VehicleState(
        id=vid, lane=lane, s=s, y=road.lane_center(lane), v=cfg.cut_in_speed,
        length=lead.length, width=lead.width,
    )
    driver = HdvDriver(
        style=DriverStyle.AGGRESSIVE, idm=idm, mobil=MobilParams(politeness=0.0), target_lane=lane,
        forced=ForcedLaneChange(lane=lead.lane, trigger_gap=cfg.cut_in_gap), use_mobil=False,
    )
    return _with(world, [cutter], {vid: driver})


def _flow_oscillation(world: WorldState, cfg: ScenarioConfig, rng: np.random.Generator) -> WorldState:
    road = world.road
    lead = world.platoon()[0]
    s = lead.s + lead.length + cfg.leader_gap
    world = _without(
        world, lambda v: not v.in_platoon and v.lane == lead.lane and lead.s < v.s < s + 25.0
    )
    vid = _next_id(world)
    leader = VehicleState(
        id=vid, lane=lead.lane, s=s, y=road.lane_center(lead.lane), v=cfg.oscillation_base,
        length=lead.length, width=lead.width,
    )
    driver = HdvDriver(
        style=DriverStyle.NEUTRAL, idm=IdmParams(v0=cfg.oscillation_base), mobil=MobilParams(),
        target_lane=lead.lane, use_mobil=False,
        oscillation=Oscillation(
            cfg.oscillation_base, cfg.oscillation_amplitude, cfg.oscillation_period,
            phase_s=float(rng.uniform(0.0, cfg.oscillation_period)),
        ),
    )
    return _with(world, [leader], {vid: driver})


_OVERLAYS = {
    ScenarioKind.TRAFFIC_ACCIDENTS: _traffic_accidents,
    ScenarioKind.HUMAN_INTERFERENCE: _human_interference,
    ScenarioKind.FLOW_OSCILLATION: _flow_oscillation,
}


def apply_scenario(world: WorldState, cfg: ScenarioConfig) -> WorldState:
    """Overlay the scenario's scripted actors. Scenario draws use their own stream derived
    from the world seed, so the base population is unaffected by the scenario choice."""
    overlay = _OVERLAYS.get(ScenarioKind(cfg.kind))
    if overlay is None:
        return world
    if not world.platoon():
        raise ConfigError("scenario needs a platoon", "scenario.kind")
    rng = np.random.default_rng([world.seed, 7919])
    return overlay(world, cfg, rng)
