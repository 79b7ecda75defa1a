"""
Tests for the scenario overlays: wrecks, scripted cut-ins and an oscillating leader.
"""
import pytest

from platoon.config import ScenarioSpec
from platoon.errors import ConfigError
from platoon.scenarios import ScenarioConfig, ScenarioKind
from platoon.world import detect_collisions, spawn_traffic

BASE = ScenarioSpec()


def _spec(kind: ScenarioKind) -> ScenarioSpec:
    return BASE.with_scenario(kind)


def test_plain_world_is_the_spawned_population():
    world = _spec(ScenarioKind.PLAIN).build_world(4)
    spawned = spawn_traffic(BASE.spawn, BASE.road, 4, BASE.idm, BASE.mobil, BASE.world)
    assert world.to_dict() == spawned.to_dict()


@pytest.mark.parametrize("seed", range(6))
def test_accident_blocks_platoon_lane_inside_zone(seed):
    spec = _spec(ScenarioKind.TRAFFIC_ACCIDENTS)
    world = spec.build_world(seed)
    lane = spec.spawn.platoon_lane
    wrecks = [v for v in world.vehicles if v.crashed]
    in_lane = [v for v in wrecks if v.lane == lane]
    assert len(in_lane) == 2
    assert all(spec.road.zone_start <= v.s <= spec.road.zone_end for v in wrecks)
    assert all(v.v == 0.0 for v in wrecks)
    blocked = {v.lane for v in wrecks}
    assert len(blocked) < spec.road.num_lanes
    assert {lane - 1, lane + 1} - blocked
    assert detect_collisions(world) == ()


def test_interference_adds_scripted_cutter():
    spec = _spec(ScenarioKind.HUMAN_INTERFERENCE)
    world = spec.build_world(2)
    lead = world.platoon()[0]
    scripted = [vid for vid, d in world.drivers.items() if d.forced is not None]
    assert len(scripted) == 1
    cutter = world.vehicle(scripted[0])
    driver = world.drivers[cutter.id]
    assert abs(cutter.lane - lead.lane) == 1
    assert cutter.s == pytest.approx(lead.s + spec.scenario.cut_in_lead_distance)
    assert driver.forced.lane == lead.lane
    assert driver.forced.trigger_gap == spec.scenario.cut_in_gap
    assert not driver.use_mobil


def test_oscillation_places_leader_ahead_of_platoon():
    spec = _spec(ScenarioKind.FLOW_OSCILLATION)
    world = spec.build_world(5)
    lead = world.platoon()[0]
    leaders = [vid for vid, d in world.drivers.items() if d.oscillation is not None]
    assert len(leaders) == 1
    leader = world.vehicle(leaders[0])
    osc = world.drivers[leader.id].oscillation
    assert leader.lane == lead.lane
    assert leader.s - lead.s == pytest.approx(lead.length + spec.scenario.leader_gap)
    assert 0.0 <= osc.phase_s < spec.scenario.oscillation_period
    ahead, _ = world.lane_neighbors(lead.lane, lead.s, exclude=lead.id)
    assert ahead.id == leader.id


@pytest.mark.parametrize("kind", list(ScenarioKind))
def test_overlay_is_seed_deterministic_and_keeps_platoon(kind):
    spec = _spec(kind)
    a, b = spec.build_world(9), spec.build_world(9)
    assert a.to_dict() == b.to_dict()
    plain = _spec(ScenarioKind.PLAIN).build_world(9)
    assert a.platoon() == plain.platoon()


def test_scenario_config_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig(cut_in_gap=0.0)
    with pytest.raises(ConfigError):
        ScenarioConfig(wreck_offset=(50.0, 10.0))
