"""
Tests for world stepping, collision detection, neighbour queries and seeded spawning.
"""
from dataclasses import replace

import pytest

from platoon.dynamics import ControlCommand, VehicleKind
from platoon.errors import ConfigError, UnknownVehicleError, ValidationError
from platoon.road import RoadSpec
from platoon.world import (
    SpawnConfig,
    WorldConfig,
    detect_collisions,
    neighbors,
    overlapping,
    spawn_traffic,
    step_world,
)

from .builders import ROAD, car, cav, world_of

COAST = ControlCommand(0.0, 0.0)


# ----------------------------
# Collisions
# ----------------------------
def test_circle_overlap_threshold():
    a = car(0, 1, 100.0)
    assert overlapping(a, car(1, 1, 104.9))
    assert not overlapping(a, car(1, 1, 105.0))


def test_adjacent_lanes_never_overlap_side_by_side():
    a = car(0, 1, 100.0)
    b = car(1, 2, 100.0)
    assert not overlapping(a, b)
    assert detect_collisions(world_of(a, b)) == ()


def test_detect_collisions_reports_sorted_pairs():
    world = world_of(car(7, 1, 100.0), car(3, 1, 103.0), car(5, 0, 300.0))
    events = detect_collisions(world)
    assert [e.ids for e in events] == [(3, 7)]
    assert events[0].kind == "collision"


def test_pairs_of_wrecks_are_not_reported_again():
    world = world_of(car(1, 1, 100.0, v=0.0, crashed=True), car(2, 1, 102.0, v=0.0, crashed=True))
    assert detect_collisions(world) == ()


def test_sweep_matches_brute_force():
    vehicles = [car(k, k % 2, 1.7 * k) for k in range(30)]
    world = world_of(*vehicles)
    brute = {
        (a.id, b.id)
        for i, a in enumerate(vehicles) for b in vehicles[i + 1:]
        if overlapping(a, b)
    }
    assert brute
    assert {e.ids for e in detect_collisions(world)} == brute


# ----------------------------
# Stepping
# ----------------------------
def test_step_advances_clock_and_vehicles():
    world = world_of(cav(0, 1, 100.0, v=20.0), car(1, 0, 50.0, v=20.0))
    nxt, events = step_world(world, {0: COAST})
    assert nxt.step_index == 1
    assert nxt.time == pytest.approx(world.config.dt)
    assert nxt.vehicle(0).s > 100.0
    assert nxt.vehicle(1).s > 50.0
    assert events == ()
    assert world.step_index == 0


def test_unknown_and_missing_commands():
    world = world_of(cav(0, 1, 100.0), car(1, 0, 50.0))
    with pytest.raises(UnknownVehicleError):
        step_world(world, {0: COAST, 9: COAST})
    with pytest.raises(UnknownVehicleError):
        step_world(world, {0: COAST, 1: COAST})
    with pytest.raises(ValidationError):
        step_world(world, {})


def test_collision_freezes_both_vehicles():
    world = world_of(cav(0, 1, 106.0, v=0.0), cav(1, 1, 100.0, v=20.0))
    nxt, events = step_world(world, {0: COAST, 1: ControlCommand(3.0, 0.0)})
    assert [e.ids for e in events if e.kind == "collision"] == [(0, 1)]
    for vid in (0, 1):
        assert nxt.vehicle(vid).crashed
        assert nxt.vehicle(vid).v == 0.0
    frozen, events = step_world(nxt, {})
    assert frozen.vehicle(1) == nxt.vehicle(1)
    assert not [e for e in events if e.kind == "collision"]


def test_vehicle_reaching_road_end_exits():
    road = RoadSpec(length=500.0, scenario_zone=(100.0, 200.0))
    world = world_of(cav(0, 1, 50.0, road=road), car(1, 0, 502.4, v=20.0, road=road), road=road)
    nxt, events = step_world(world, {0: COAST})
    assert [e.kind for e in events] == ["exit"]
    assert 1 not in nxt.by_id
    assert 1 not in nxt.drivers


def test_zone_exit_and_halt_events():
    world = world_of(cav(0, 1, ROAD.zone_end - 0.5, v=20.0), cav(1, 1, 200.0, v=0.6))
    nxt, events = step_world(world, {0: COAST, 1: ControlCommand(-5.0, 0.0)})
    kinds = {(e.kind, e.ids) for e in events}
    assert ("zone_exit", (0,)) in kinds
    assert ("halt", (1,)) in kinds


def test_lateral_position_is_clamped_to_road():
    veh = replace(cav(0, 0, 100.0, v=20.0), y=0.05, heading=-0.5)
    nxt, _ = step_world(world_of(veh), {0: COAST})
    assert nxt.vehicle(0).y == 0.0
    assert nxt.vehicle(0).lane == 0


def test_noise_is_reproducible_from_world_state():
    world = spawn_traffic(SpawnConfig(), ROAD, seed=3, world_cfg=WorldConfig(accel_noise=0.3))
    commands = {v.id: COAST for v in world.platoon()}
    a, _ = step_world(world, commands)
    b, _ = step_world(world, commands)
    assert a.to_dict() == b.to_dict()
    assert a.rng_state != world.rng_state


def test_prediction_copy_is_noise_free():
    world = spawn_traffic(SpawnConfig(), ROAD, seed=3, world_cfg=WorldConfig(accel_noise=0.3))
    twin = world.as_prediction()
    assert twin.config.accel_noise == 0.0
    assert twin.rng_state is None
    assert twin.vehicles == world.vehicles


# ----------------------------
# Queries
# ----------------------------
def test_lane_neighbors():
    world = world_of(car(0, 1, 100.0), car(1, 1, 130.0), car(2, 1, 60.0), car(3, 2, 110.0))
    leader, follower = world.lane_neighbors(1, 100.0, exclude=0)
    assert (leader.id, follower.id) == (1, 2)
    assert world.lane_neighbors(0, 100.0) == (None, None)
    assert world.lane_neighbors(9, 100.0) == (None, None)


def test_neighbors_sorted_by_distance_then_id():
    world = world_of(car(0, 1, 100.0), car(1, 0, 110.0), car(2, 2, 90.0), car(3, 1, 250.0))
    assert [v.id for v in neighbors(world, 0, 50.0)] == [1, 2]
    assert neighbors(world, 0, 0.0) == []
    with pytest.raises(UnknownVehicleError):
        neighbors(world, 42, 50.0)


def test_platoon_is_front_to_back():
    world = world_of(cav(0, 1, 80.0), cav(1, 1, 120.0), cav(2, 1, 100.0), car(3, 0, 300.0))
    assert [v.id for v in world.platoon()] == [1, 2, 0]


# ----------------------------
# Spawning
# ----------------------------
def test_spawn_is_seed_deterministic():
    a = spawn_traffic(SpawnConfig(), ROAD, seed=11)
    b = spawn_traffic(SpawnConfig(), ROAD, seed=11)
    c = spawn_traffic(SpawnConfig(), ROAD, seed=12)
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != c.to_dict()


@pytest.mark.parametrize("seed", range(5))
def test_spawned_world_is_collision_free_and_well_formed(seed):
    cfg = SpawnConfig()
    world = spawn_traffic(cfg, ROAD, seed)
    platoon = world.platoon()
    assert [v.id for v in platoon] == list(range(cfg.platoon_size))
    assert all(v.kind is VehicleKind.CAV and v.lane == cfg.platoon_lane for v in platoon)
    gaps = [(a.s - b.s) - 0.5 * (a.length + b.length) for a, b in zip(platoon, platoon[1:])]
    assert gaps == pytest.approx([cfg.platoon_headway] * (cfg.platoon_size - 1))
    hdvs = [v for v in world.vehicles if not v.in_platoon]
    assert cfg.hdv_count_range[0] <= len(hdvs) <= cfg.hdv_count_range[1]
    assert set(world.drivers) == {v.id for v in hdvs}
    assert detect_collisions(world) == ()


def test_spawn_fails_loudly_when_road_is_full():
    crowded = SpawnConfig(hdv_count_range=(200, 200), max_attempts=20)
    with pytest.raises(ConfigError) as err:
        spawn_traffic(crowded, ROAD, seed=0)
    assert err.value.path == "spawn.hdv_count_range"


def test_spawn_rejects_platoon_lane_off_road():
    with pytest.raises(ConfigError):
        spawn_traffic(SpawnConfig(platoon_lane=5), ROAD, seed=0)
