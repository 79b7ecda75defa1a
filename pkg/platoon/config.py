"""
Scenario files: one YAML document per scenario, mapped onto frozen dataclasses.

Every section is optional; missing keys keep their defaults. Each dataclass is checked
against a strict pydantic mirror first, so unknown keys and mistyped values raise
`ConfigError` with the dotted path of the offending field. `world.gains` also accepts
the name of a gain preset.
"""
from __future__ import annotations

import functools
import hashlib
import json
import logging
import typing
from dataclasses import dataclass, field, fields, is_dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Annotated, Any

import yaml
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    StrictBool,
    StrictFloat,
    StrictInt,
    StrictStr,
    ValidationError,
    create_model,
)

from .drivers import IdmParams, MobilParams
from .dynamics import GAIN_PRESETS, PidGains
from .env import EnvConfig
from .errors import ConfigError
from .fsm import FsmConfig
from .learner import TrainConfig
from .lqr import LqrConfig
from .rewards import RewardParams, RewardWeights
from .road import RoadSpec
from .scenarios import ScenarioConfig, ScenarioKind, apply_scenario
from .twin import TwinConfig
from .world import SpawnConfig, WorldConfig, WorldState, spawn_traffic

LOG = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RewardConfig:
    weights: RewardWeights = RewardWeights()
    params: RewardParams = RewardParams()


@dataclass(frozen=True)
class ScenarioSpec:
    name: str = "plain"
    road: RoadSpec = RoadSpec()
    spawn: SpawnConfig = SpawnConfig()
    scenario: ScenarioConfig = ScenarioConfig()
    idm: IdmParams = IdmParams()
    mobil: MobilParams = MobilParams()
    world: WorldConfig = WorldConfig()
    rewards: RewardConfig = RewardConfig()
    env: EnvConfig = EnvConfig()
    twin: TwinConfig = TwinConfig()
    lqr: LqrConfig = LqrConfig()
    fsm: FsmConfig = FsmConfig()
    train: TrainConfig = TrainConfig()
    train_scenarios: tuple[ScenarioKind, ...] = (ScenarioKind.PLAIN, ScenarioKind.FLOW_OSCILLATION)
    seeds: tuple[int, ...] = field(default_factory=lambda: tuple(range(10)))

    def __post_init__(self):
        if not self.road.valid_lane(self.spawn.platoon_lane):
            raise ConfigError("platoon lane not on the road", "spawn.platoon_lane")
        if self.spawn.platoon_size > 4:
            raise ConfigError("joint action space grows as 5**N; at most 4 vehicles", "spawn.platoon_size")
        if not self.train_scenarios:
            raise ConfigError("need at least one training scenario", "train_scenarios")

    def build_world(self, seed: int) -> WorldState:
        world = spawn_traffic(self.spawn, self.road, seed, self.idm, self.mobil, self.world)
        return apply_scenario(world, self.scenario)

    def with_scenario(self, kind: ScenarioKind) -> "ScenarioSpec":
        return replace(self, scenario=replace(self.scenario, kind=ScenarioKind(kind)))

    def to_dict(self) -> dict[str, Any]:
        return _plain(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ----------------------------
# dataclass <-> plain data
# ----------------------------
def _plain(obj: Any) -> Any:
    if is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    return obj


# ----------------------------
# schema validation
# ----------------------------
_SCHEMA_CONFIG = ConfigDict(extra="forbid")
_SCALARS = {bool: StrictBool, int: StrictInt, float: StrictFloat, str: StrictStr}
_PRESETS: dict[type, dict[str, Any]] = {PidGains: GAIN_PRESETS}


def _enum_by_name(tp: type[Enum]):
    def coerce(value: Any) -> Any:
        if isinstance(value, str) and value in tp.__members__:
            return tp[value]
        return value
    return coerce


def _preset(tp: type, presets: dict[str, Any]):
    def coerce(value: Any) -> Any:
        if not isinstance(value, str):
            return value
        if value not in presets:
            raise ValueError(f"unknown {tp.__name__} set {value!r}; expected one of {', '.join(presets)}")
        return _plain(presets[value])
    return coerce


def _field_type(tp: Any) -> Any:
    if is_dataclass(tp):
        model = _schema(tp)
        if tp in _PRESETS:
            return Annotated[model, BeforeValidator(_preset(tp, _PRESETS[tp]))]
        return model
    if isinstance(tp, type) and issubclass(tp, Enum):
        return Annotated[tp, BeforeValidator(_enum_by_name(tp))]
    if typing.get_origin(tp) is tuple:
        args = typing.get_args(tp)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple[_field_type(args[0]), ...]
        return tuple[tuple(_field_type(a) for a in args)]
    return _SCALARS.get(tp, tp)


@functools.cache
def _schema(cls: type) -> type[BaseModel]:
    """Strict mirror of a config dataclass: same field names, no unknown keys.

    Defaults stay with the dataclass; only the keys present in the document are passed on.
    """
    hints = typing.get_type_hints(cls)
    specs = {f.name: (_field_type(hints[f.name]), None) for f in fields(cls) if f.init}
    return create_model(f"{cls.__name__}Schema", __config__=_SCHEMA_CONFIG, **specs)


def _error_path(err: dict[str, Any]) -> tuple[str, str]:
    keys = [str(k) for k in err["loc"] if isinstance(k, str)]
    items = "".join(f"[{k}]" for k in err["loc"] if isinstance(k, int))
    message = f"{items} {err['msg']}".strip()
    return message, ".".join(keys) or "<root>"


def _instantiate(cls: type, model: BaseModel, path: str) -> Any:
    hints = typing.get_type_hints(cls)
    prefix = f"{path}." if path else ""
    kwargs = {}
    for name in model.model_fields_set:
        value = getattr(model, name)
        if is_dataclass(hints[name]):
            value = _instantiate(hints[name], value, f"{prefix}{name}")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path or "<root>") from exc


def _build(cls: type, data: Any) -> Any:
    try:
        model = _schema(cls).model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        LOG.debug("%d schema error(s) in %s", exc.error_count(), cls.__name__)
        raise ConfigError(*_error_path(first)) from exc
    return _instantiate(cls, model, "")


def spec_from_dict(data: dict[str, Any] | None) -> ScenarioSpec:
    return _build(ScenarioSpec, data or {})


def load_spec(path: str | Path) -> ScenarioSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}", str(path)) from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}", str(path)) from exc
    return spec_from_dict(data)


def dump_spec(spec: ScenarioSpec) -> str:
    return yaml.safe_dump(spec.to_dict(), sort_keys=False)
