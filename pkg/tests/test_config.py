"""
Tests for scenario files: presets, strict key checking, typing, and hashing.
"""
from dataclasses import replace
from pathlib import Path

import pytest
import yaml

from platoon.config import dump_spec, load_spec, spec_from_dict
from platoon.dynamics import GAIN_PRESETS, PidGains
from platoon.errors import ConfigError
from platoon.scenarios import ScenarioKind

CONFIGS = sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.yaml"))


def test_presets_are_shipped():
    assert {p.stem for p in CONFIGS} >= {"plain", "traffic_accidents", "human_interference", "flow_oscillation"}


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_every_preset_loads(path):
    spec = load_spec(path)
    assert spec.name == path.stem
    assert spec.seeds


def test_preset_scenario_kinds():
    by_name = {p.stem: load_spec(p) for p in CONFIGS}
    assert by_name["traffic_accidents"].scenario.kind is ScenarioKind.TRAFFIC_ACCIDENTS
    assert by_name["flow_oscillation"].scenario.kind is ScenarioKind.FLOW_OSCILLATION
    assert by_name["traffic_accidents"].env.end_on_pass is True


def test_empty_document_gives_defaults():
    spec = spec_from_dict(None)
    assert spec.name == "plain"
    assert spec.spawn.platoon_size == 3


@pytest.mark.parametrize(
    "data, path",
    [
        ({"twin": {"horizn": 3}}, "twin.horizn"),
        ({"colour": "red"}, "colour"),
        ({"env": {"step_cap": "many"}}, "env.step_cap"),
        ({"env": {"end_on_pass": "yes"}}, "env.end_on_pass"),
        ({"road": {"scenario_zone": [1.0]}}, "road.scenario_zone"),
        ({"scenario": {"kind": "Nope"}}, "scenario.kind"),
        ({"spawn": {"platoon_size": 5}}, "spawn.platoon_size"),
        ({"twin": {"horizon": 0}}, "twin.horizon"),
        ({"twin": {"stop_decel": 0.0}}, "twin.stop_decel"),
        ({"world": {"gains": "nope"}}, "world.gains"),
        ({"world": {"gains": {"lateral_gain": 1.0}}}, "world.gains.lateral_gain"),
        ({"seeds": [1, "two"]}, "seeds"),
        ({"env": {"d_vision": None}}, "env.d_vision"),
        ("plain", "<root>"),
    ],
)
def test_bad_values_name_their_field(data, path):
    with pytest.raises(ConfigError) as err:
        spec_from_dict(data)
    assert err.value.path == path


def test_enum_accepts_value_or_member_name():
    assert spec_from_dict({"scenario": {"kind": "TrafficAccidents"}}).scenario.kind is ScenarioKind.TRAFFIC_ACCIDENTS
    assert spec_from_dict({"scenario": {"kind": "FLOW_OSCILLATION"}}).scenario.kind is ScenarioKind.FLOW_OSCILLATION


def test_integers_are_accepted_for_float_fields():
    spec = spec_from_dict({"road": {"length": 800}})
    assert spec.road.length == 800.0
    assert isinstance(spec.road.length, float)


def test_dump_then_load_is_identity(small_spec):
    assert spec_from_dict(yaml.safe_load(dump_spec(small_spec))) == small_spec


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_spec(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("road: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_spec(bad)


def test_config_hash_tracks_content(small_spec):
    assert small_spec.config_hash() == spec_from_dict(small_spec.to_dict()).config_hash()
    changed = replace(small_spec, env=replace(small_spec.env, step_cap=41))
    assert changed.config_hash() != small_spec.config_hash()
    assert len(small_spec.config_hash()) == 16


def test_with_scenario_only_changes_kind(small_spec):
    other = small_spec.with_scenario("HumanInterference")
    assert other.scenario.kind is ScenarioKind.HUMAN_INTERFERENCE
    assert replace(other, scenario=small_spec.scenario) == small_spec


def test_gain_preset_by_name_or_mapping():
    literal = spec_from_dict({"world": {"gains": "literal_pd"}}).world.gains
    assert literal == GAIN_PRESETS["literal_pd"]
    assert spec_from_dict({"world": {"gains": "default"}}).world.gains == PidGains()
    tuned = spec_from_dict({"world": {"gains": {"lateral_kp": 0.3}}}).world.gains
    assert tuned.lateral_kp == 0.3
    assert tuned.heading_kp == PidGains().heading_kp


def test_schema_error_keeps_message_and_item_index():
    with pytest.raises(ConfigError) as err:
        spec_from_dict({"seeds": [1, "two"]})
    assert str(err.value).startswith("seeds: [1]")
