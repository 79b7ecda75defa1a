"""
Highway world: immutable snapshots, synchronous stepping, collision detection and spawning.

A `WorldState` is a value. `step_world` returns a new state and the events raised by the
step; nothing is mutated in place, so snapshots can be shared freely with predictors.
"""
from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np

from .drivers import (
    DriverStyle,
    HdvDriver,
    IdmParams,
    Malfunction,
    MobilParams,
    bumper_gap,
    style_params,
)
from .dynamics import (
    DEFAULT_GAINS,
    DEFAULT_LIMITS,
    DT,
    ControlCommand,
    DynamicsLimits,
    PidGains,
    VehicleKind,
    VehicleState,
    step_kinematics,
)
from .errors import ConfigError, UnknownVehicleError, ValidationError
from .road import RoadSpec

LOG = logging.getLogger(__name__)

EVENT_KINDS = ("collision", "halt", "zone_exit", "exit")


@dataclass(frozen=True)
class WorldConfig:
    dt: float = DT
    limits: DynamicsLimits = DEFAULT_LIMITS
    gains: PidGains = DEFAULT_GAINS
    accel_noise: float = 0.0
    halt_speed: float = 0.5


@dataclass(frozen=True)
class WorldEvent:
    kind: str
    step: int
    ids: tuple[int, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "step": self.step, "ids": list(self.ids)}


@dataclass(frozen=True)
class WorldState:
    road: RoadSpec
    step_index: int
    vehicles: tuple[VehicleState, ...]
    drivers: Mapping[int, HdvDriver] = field(default_factory=dict)
    config: WorldConfig = WorldConfig()
    rng_state: Mapping[str, Any] | None = None
    events: tuple[WorldEvent, ...] = ()
    seed: int = 0

    @property
    def time(self) -> float:
        return self.step_index * self.config.dt

    @cached_property
    def by_id(self) -> dict[int, VehicleState]:
        return {v.id: v for v in self.vehicles}

    @cached_property
    def _lane_index(self) -> dict[int, tuple[list[float], list[VehicleState]]]:
        buckets: dict[int, list[VehicleState]] = {lane: [] for lane in range(self.road.num_lanes)}
        for v in self.vehicles:
            buckets[v.lane].append(v)
        index = {}
        for lane, members in buckets.items():
            members.sort(key=lambda v: (v.s, v.id))
            index[lane] = ([v.s for v in members], members)
        return index

    def vehicle(self, vehicle_id: int) -> VehicleState:
        try:
            return self.by_id[vehicle_id]
        except KeyError:
            raise UnknownVehicleError(f"no vehicle with id {vehicle_id}") from None

    def platoon(self) -> list[VehicleState]:
        """Platoon members ordered front to back."""
        return sorted((v for v in self.vehicles if v.in_platoon), key=lambda v: (-v.s, v.id))

    def lane_neighbors(
        self, lane: int, s: float, exclude: int | None = None
    ) -> tuple[VehicleState | None, VehicleState | None]:
        """Nearest vehicle at or ahead of `s` and nearest strictly behind it in `lane`."""
        if not self.road.valid_lane(lane):
            return None, None
        positions, members = self._lane_index[lane]
        i = bisect.bisect_left(positions, s)
        leader = next((v for v in members[i:] if v.id != exclude), None)
        follower = next((v for v in reversed(members[:i]) if v.id != exclude), None)
        return leader, follower

    def as_prediction(self, use_mobil: bool = True) -> "WorldState":
        """Deterministic copy for look-ahead: no noise, no unrealised driver draws."""
        drivers = {
            vid: d.predicted(self.step_index, self.time, use_mobil) for vid, d in self.drivers.items()
        }
        return replace(self, drivers=drivers, config=replace(self.config, accel_noise=0.0), rng_state=None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "step_index": self.step_index,
            "seed": self.seed,
            "vehicles": [v.to_dict() for v in self.vehicles],
            "drivers": {str(k): d.to_dict() for k, d in sorted(self.drivers.items())},
            "rng_state": self.rng_state,
        }


def neighbors(world: WorldState, vehicle_id: int, d_vision: float) -> list[VehicleState]:
    """Vehicles within `d_vision` longitudinally of `vehicle_id`, nearest first (ties by id)."""
    ego = world.vehicle(vehicle_id)
    if d_vision <= 0:
        return []
    found = [v for v in world.vehicles if v.id != vehicle_id and abs(v.s - ego.s) <= d_vision]
    found.sort(key=lambda v: (abs(v.s - ego.s), v.id))
    return found


# ----------------------------
# Collisions
# ----------------------------
def overlapping(a: VehicleState, b: VehicleState, buffer: float = 0.0) -> bool:
    """Circle test (radius = half length) gated by lateral body overlap."""
    if abs(a.y - b.y) >= 0.5 * (a.width + b.width) + buffer:
        return False
    return math.hypot(a.s - b.s, a.y - b.y) < a.radius + b.radius + buffer


def detect_collisions(world: WorldState) -> tuple[WorldEvent, ...]:
    """All overlapping pairs, skipping pairs whose members are both already crashed.

    Sort-and-sweep along s; a pair can only overlap when |ds| < r_i + r_j.
    """
    ordered = sorted(world.vehicles, key=lambda v: (v.s, v.id))
    if not ordered:
        return ()
    r_max = max(v.radius for v in ordered)
    events = []
    for i, a in enumerate(ordered):
        reach = a.radius + r_max
        for b in ordered[i + 1:]:
            if b.s - a.s >= reach:
                break
            if a.crashed and b.crashed:
                continue
            if overlapping(a, b):
                events.append(WorldEvent("collision", world.step_index, tuple(sorted((a.id, b.id)))))
    events.sort(key=lambda e: e.ids)
    return tuple(events)


# ----------------------------
# Stepping
# ----------------------------
def step_world(
    world: WorldState, cav_commands: Mapping[int, ControlCommand]
) -> tuple[WorldState, tuple[WorldEvent, ...]]:
    """Advance the whole world by one step.

    Every live CAV needs a command (crashed CAVs may be omitted). HDVs are driven by their
    `HdvDriver`; all controls are computed from the pre-step snapshot.
    """
    cfg = world.config
    by_id = world.by_id
    for vid in cav_commands:
        v = by_id.get(vid)
        if v is None or v.kind is not VehicleKind.CAV:
            raise UnknownVehicleError(f"command for unknown CAV {vid}")
    missing = [v.id for v in world.vehicles if v.kind is VehicleKind.CAV and not v.crashed and v.id not in cav_commands]
    if missing:
        raise ValidationError(f"missing commands for CAVs {missing}")

    rng = None
    rng_state = world.rng_state
    if cfg.accel_noise > 0 and rng_state is not None:
        rng = np.random.default_rng()
        rng.bit_generator.state = dict(rng_state)

    road = world.road
    step = world.step_index + 1
    drivers = dict(world.drivers)
    moved: list[VehicleState] = []
    events: list[WorldEvent] = []

    for veh in world.vehicles:
        if veh.crashed:
            moved.append(veh)
            continue
        if veh.kind is VehicleKind.CAV:
            cmd = cav_commands[veh.id]
        else:
            driver = drivers.get(veh.id)
            if driver is None:
                raise UnknownVehicleError(f"HDV {veh.id} has no driver")
            cmd, drivers[veh.id] = driver.control(veh, world, cfg.gains, cfg.limits)
            if rng is not None:
                cmd = ControlCommand(cmd.throttle + float(rng.normal(0.0, cfg.accel_noise)), cmd.steer)
        nxt = step_kinematics(veh, cmd, cfg.dt, cfg.limits)
        y = min(max(nxt.y, 0.0), road.width)
        nxt = replace(nxt, y=y, lane=road.lane_of(y))
        if nxt.kind is VehicleKind.HDV and nxt.s - nxt.radius > road.length:
            events.append(WorldEvent("exit", step, (nxt.id,)))
            drivers.pop(nxt.id, None)
            continue
        moved.append(nxt)

    staged = WorldState(road, step, tuple(moved), drivers, cfg, rng_state, (), world.seed)
    collisions = detect_collisions(staged)
    if collisions:
        crashed_ids = {vid for e in collisions for vid in e.ids}
        moved = [replace(v, crashed=True, v=0.0, a=0.0) if v.id in crashed_ids else v for v in moved]
        events.extend(collisions)

    zone_end = road.zone_end
    for v in moved:
        if not v.in_platoon:
            continue
        before = by_id[v.id]
        if before.v >= cfg.halt_speed > v.v:
            events.append(WorldEvent("halt", step, (v.id,)))
        if before.s < zone_end <= v.s:
            events.append(WorldEvent("zone_exit", step, (v.id,)))

    if rng is not None:
        rng_state = rng.bit_generator.state
    events_t = tuple(events)
    return WorldState(road, step, tuple(moved), drivers, cfg, rng_state, events_t, world.seed), events_t


# ----------------------------
# Spawning
# ----------------------------
@dataclass(frozen=True)
class SpawnConfig:
    platoon_size: int = 3
    platoon_lane: int = 1
    platoon_start: float = 60.0
    platoon_speed: float = 28.0
    platoon_headway: float = 10.0
    platoon_clearance: float = 20.0
    hdv_count_range: tuple[int, int] = (6, 10)
    spawn_points: tuple[float, ...] = (20.0, 120.0, 200.0, 280.0, 360.0, 440.0)
    spawn_jitter: float = 30.0
    hdv_speed_range: tuple[float, float] = (20.0, 28.0)
    style_weights: tuple[float, float, float] = (0.3, 0.4, 0.3)
    min_spawn_headway: float = 0.5
    malfunction_rate: float = 0.0
    malfunction_window: tuple[int, int] = (60, 300)
    max_attempts: int = 100
    vehicle_length: float = 5.0
    vehicle_width: float = 2.0

    def __post_init__(self):
        if self.platoon_size < 1:
            raise ConfigError("must be >= 1", "spawn.platoon_size")
        lo, hi = self.hdv_count_range
        if not 0 <= lo <= hi:
            raise ConfigError("expected 0 <= min <= max", "spawn.hdv_count_range")
        if not self.spawn_points:
            raise ConfigError("need at least one spawn point", "spawn.spawn_points")
        if len(self.style_weights) != 3 or min(self.style_weights) < 0 or sum(self.style_weights) <= 0:
            raise ConfigError("three non-negative weights required", "spawn.style_weights")
        if not 0.0 <= self.malfunction_rate <= 1.0:
            raise ConfigError("must be in [0, 1]", "spawn.malfunction_rate")


def _spawn_feasible(
    candidate: VehicleState, placed: Sequence[VehicleState], idm: IdmParams, cfg: SpawnConfig, road: RoadSpec
) -> bool:
    if candidate.s - candidate.radius < 0 or candidate.s + candidate.radius > road.length:
        return False
    platoon = [v for v in placed if v.in_platoon]
    if platoon and candidate.lane == cfg.platoon_lane:
        head = max(v.s for v in platoon) + cfg.platoon_clearance
        tail = min(v.s for v in platoon) - cfg.platoon_clearance
        if tail <= candidate.s <= head:
            return False
    for other in placed:
        if other.lane != candidate.lane:
            continue
        rear, front = (candidate, other) if candidate.s <= other.s else (other, candidate)
        if bumper_gap(rear, front) < idm.s0 + cfg.min_spawn_headway * rear.v:
            return False
    return True


def spawn_traffic(
    cfg: SpawnConfig,
    road: RoadSpec,
    seed: int,
    idm: IdmParams = IdmParams(),
    mobil: MobilParams = MobilParams(),
    world_cfg: WorldConfig = WorldConfig(),
) -> WorldState:
    """Place the platoon and a random HDV population. The same seed gives the same world."""
    if not road.valid_lane(cfg.platoon_lane):
        raise ConfigError(f"lane {cfg.platoon_lane} not on a {road.num_lanes}-lane road", "spawn.platoon_lane")
    rng = np.random.default_rng(seed)
    vehicles: list[VehicleState] = []
    drivers: dict[int, HdvDriver] = {}
    L, W = cfg.vehicle_length, cfg.vehicle_width

    s = cfg.platoon_start
    for k in range(cfg.platoon_size):
        if k:
            s -= cfg.platoon_headway + L
        vehicles.append(VehicleState(
            id=k, lane=cfg.platoon_lane, s=s, y=road.lane_center(cfg.platoon_lane), v=cfg.platoon_speed,
            length=L, width=W, kind=VehicleKind.CAV, in_platoon=True,
        ))
    if vehicles[-1].s - vehicles[-1].radius < 0:
        raise ConfigError("platoon does not fit behind the start position", "spawn.platoon_start")

    weights = np.asarray(cfg.style_weights, dtype=float)
    weights = weights / weights.sum()
    styles = list(DriverStyle)
    count = int(rng.integers(cfg.hdv_count_range[0], cfg.hdv_count_range[1] + 1))
    for k in range(count):
        vid = cfg.platoon_size + k
        for _ in range(cfg.max_attempts):
            point = float(rng.choice(cfg.spawn_points)) + float(rng.uniform(-cfg.spawn_jitter, cfg.spawn_jitter))
            lane = int(rng.integers(road.num_lanes))
            v0 = float(rng.uniform(*cfg.hdv_speed_range))
            style = styles[int(rng.choice(len(styles), p=weights))]
            candidate = VehicleState(id=vid, lane=lane, s=point, y=road.lane_center(lane), v=v0, length=L, width=W)
            if _spawn_feasible(candidate, vehicles, idm, cfg, road):
                break
        else:
            raise ConfigError(
                f"could not place HDV {k} without overlap in {cfg.max_attempts} attempts", "spawn.hdv_count_range"
            )
        hdv_idm, hdv_mobil = style_params(style, replace(idm, v0=v0), mobil)
        malfunction = None
        if cfg.malfunction_rate > 0 and rng.random() < cfg.malfunction_rate:
            kind = "stall" if rng.random() < 0.5 else "brake"
            start = int(rng.integers(*cfg.malfunction_window))
            malfunction = Malfunction(kind, start, int(rng.integers(15, 31)))
        drivers[vid] = HdvDriver(
            style=style, idm=hdv_idm, mobil=hdv_mobil, target_lane=lane,
            mobil_phase=int(rng.integers(mobil.period_steps)), malfunction=malfunction,
        )
        vehicles.append(candidate)

    vehicles.sort(key=lambda v: v.id)
    LOG.debug("spawned seed=%d platoon=%d hdv=%d", seed, cfg.platoon_size, count)
    return WorldState(
        road=road, step_index=0, vehicles=tuple(vehicles), drivers=drivers, config=world_cfg,
        rng_state=rng.bit_generator.state, seed=seed,
    )
