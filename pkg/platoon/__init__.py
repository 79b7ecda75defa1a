"""Highway platoon simulation: world model, safety projection, LQR/RL strategies."""

from .config import ScenarioSpec, load_spec, spec_from_dict
from .dynamics import ControlCommand, HighLevelAction, VehicleKind, VehicleState
from .env import Episode, JointAction, decode_action, encode_action, env_step
from .errors import PlatoonError
from .world import WorldState, spawn_traffic, step_world

__all__ = [
    "ControlCommand",
    "Episode",
    "HighLevelAction",
    "JointAction",
    "PlatoonError",
    "ScenarioSpec",
    "VehicleKind",
    "VehicleState",
    "WorldState",
    "decode_action",
    "encode_action",
    "env_step",
    "load_spec",
    "spawn_traffic",
    "spec_from_dict",
    "step_world",
]

__version__ = "0.1.0"
