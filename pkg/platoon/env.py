"""
Platoon decision environment: joint action encoding, local observations and the
episode loop that turns CAV commands into rewards, events and trace records.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Mapping, Sequence

import numpy as np

from .dynamics import ControlCommand, HighLevelAction, PidMemory, pid_track_with_memory
from .errors import ActionError, ConfigError, PlatoonError
from .rewards import RewardBreakdown, compute_reward
from .world import WorldEvent, WorldState, step_world

if TYPE_CHECKING:
    from .config import ScenarioSpec

LOG = logging.getLogger(__name__)

N_ACTIONS = len(HighLevelAction)
OBS_FEATURES = ("ds", "dy", "dvx", "dvy", "in_platoon")


# ----------------------------
# Joint actions
# ----------------------------
def encode_action(actions: Sequence[HighLevelAction | int]) -> int:
    """Mixed-radix index, first vehicle most significant: idx = sum a_k * 5**(n-1-k)."""
    idx = 0
    for a in actions:
        if isinstance(a, bool) or not isinstance(a, (int, np.integer)) or not 0 <= int(a) < N_ACTIONS:
            raise ActionError(f"invalid per-vehicle action {a!r}")
        idx = idx * N_ACTIONS + int(a)
    return idx


def decode_action(index: int, n: int) -> tuple[HighLevelAction, ...]:
    if isinstance(index, bool) or not isinstance(index, (int, np.integer)):
        raise ActionError(f"joint action index must be an integer, got {index!r}")
    index = int(index)
    if not 0 <= index < N_ACTIONS ** n:
        raise ActionError(f"joint action index {index} outside [0, {N_ACTIONS ** n})")
    digits = []
    for _ in range(n):
        index, d = divmod(index, N_ACTIONS)
        digits.append(HighLevelAction(d))
    return tuple(reversed(digits))


@dataclass(frozen=True)
class JointAction:
    per_vehicle: tuple[HighLevelAction, ...]

    @property
    def index(self) -> int:
        return encode_action(self.per_vehicle)

    @classmethod
    def from_index(cls, index: int, n: int) -> "JointAction":
        return cls(decode_action(index, n))

    @classmethod
    def uniform(cls, action: HighLevelAction, n: int) -> "JointAction":
        return cls((action,) * n)

    def names(self) -> list[str]:
        return [a.name for a in self.per_vehicle]


def all_joint_actions(n: int) -> list[tuple[HighLevelAction, ...]]:
    return list(itertools.product(HighLevelAction, repeat=n))


# ----------------------------
# Observations
# ----------------------------
@dataclass(frozen=True)
class ObservationMatrix:
    rows: np.ndarray  # (max_vehicles, 5)
    valid: np.ndarray  # (max_vehicles,) bool
    anchor_id: int


def build_observation(
    world: WorldState, platoon_ids: Sequence[int], d_vision: float, max_vehicles: int = 12
) -> ObservationMatrix:
    """Rows relative to the front-most platoon vehicle, nearest first; zero-padded.

    The anchor itself is the first row. Vehicles farther than `d_vision` are dropped.
    """
    members = [world.vehicle(i) for i in platoon_ids]
    anchor = max(members, key=lambda v: (v.s, -v.id))
    visible = [v for v in world.vehicles if abs(v.s - anchor.s) <= d_vision]
    visible.sort(key=lambda v: (abs(v.s - anchor.s), v.id))
    rows = np.zeros((max_vehicles, len(OBS_FEATURES)), dtype=np.float64)
    valid = np.zeros(max_vehicles, dtype=bool)
    ax, ay = anchor.vx, anchor.vy
    for k, v in enumerate(visible[:max_vehicles]):
        rows[k] = (v.s - anchor.s, v.y - anchor.y, v.vx - ax, v.vy - ay, 1.0 if v.in_platoon else 0.0)
        valid[k] = True
    return ObservationMatrix(rows, valid, anchor.id)


# ----------------------------
# Episode
# ----------------------------
@dataclass(frozen=True)
class EnvConfig:
    d_vision: float = 100.0
    max_vehicles: int = 12
    step_cap: int = 600
    cruise_speed: float = 28.0
    end_on_pass: bool = False

    def __post_init__(self):
        if self.d_vision < 0:
            raise ConfigError("must be >= 0", "env.d_vision")
        if self.max_vehicles < 1:
            raise ConfigError("must be >= 1", "env.max_vehicles")
        if self.step_cap < 1:
            raise ConfigError("must be >= 1", "env.step_cap")


@dataclass(frozen=True)
class CavControl:
    """Per-CAV tracking targets plus speed-loop memory."""

    target_speed: float
    target_lane: int
    memory: PidMemory = PidMemory()


def track_actions(
    world: WorldState,
    controls: Mapping[int, CavControl],
    actions: Mapping[int, HighLevelAction],
) -> tuple[dict[int, ControlCommand], dict[int, CavControl]]:
    """Turn per-CAV high-level actions into low-level commands and next controls."""
    cfg = world.config
    commands, nxt = {}, dict(controls)
    for vid, action in actions.items():
        v = world.vehicle(vid)
        if v.crashed:
            continue
        c = controls[vid]
        cmd, memory, (speed, lane) = pid_track_with_memory(
            action, v, world.road, c.target_speed, c.target_lane, c.memory, cfg.gains, cfg.limits, cfg.dt
        )
        commands[vid] = cmd
        nxt[vid] = CavControl(speed, lane, memory)
    return commands, nxt


@dataclass
class StepResult:
    observation: ObservationMatrix
    reward: RewardBreakdown
    done: bool
    reason: str | None
    events: tuple[WorldEvent, ...]


class Episode:
    """One run of a scenario: the world, CAV controller state and the trace so far."""

    def __init__(self, spec: "ScenarioSpec", seed: int, record: bool = True):
        self.spec = spec
        self.seed = int(seed)
        self.world: WorldState = spec.build_world(self.seed)
        self.platoon_ids: tuple[int, ...] = tuple(v.id for v in self.world.platoon())
        if not self.platoon_ids:
            raise ConfigError("world has no platoon", "spawn.platoon_size")
        cruise = spec.env.cruise_speed
        self.controls: dict[int, CavControl] = {
            vid: CavControl(cruise, self.world.vehicle(vid).lane) for vid in self.platoon_ids
        }
        self.record = record
        self.trace: list[dict[str, Any]] = []
        self.total_reward = 0.0
        self.done = False
        self.reason: str | None = None
        # per-step memo (admissible mask and the like), cleared on every advance
        self.step_cache: dict[Any, Any] = {}

    @property
    def n(self) -> int:
        return len(self.platoon_ids)

    def observe(self) -> ObservationMatrix:
        return build_observation(self.world, self.platoon_ids, self.spec.env.d_vision, self.spec.env.max_vehicles)

    def _termination(self) -> str | None:
        world, env = self.world, self.spec.env
        members = [world.vehicle(i) for i in self.platoon_ids]
        if any(v.crashed for v in members):
            return "collision"
        if env.end_on_pass and all(v.s >= world.road.zone_end for v in members):
            return "passed"
        if any(v.s + v.radius >= world.road.length for v in members):
            return "road_end"
        if world.step_index >= env.step_cap:
            return "timeout"
        return None

    def advance(
        self,
        commands: Mapping[int, ControlCommand],
        controls: Mapping[int, CavControl],
        joint: JointAction | None = None,
        annotations: Mapping[str, Any] | None = None,
    ) -> StepResult:
        if self.done:
            raise PlatoonError(f"episode already finished ({self.reason})")
        prev = self.world
        self.world, events = step_world(prev, commands)
        self.step_cache.clear()
        self.controls = dict(controls)
        reward = compute_reward(prev, self.world, self.platoon_ids, self.spec.rewards.weights, self.spec.rewards.params)
        self.total_reward += reward.R_global
        self.reason = self._termination()
        self.done = self.reason is not None
        if self.record:
            self.trace.append(self._record(commands, joint, reward, events, annotations or {}))
        if self.done:
            LOG.debug("episode seed=%d finished at step %d: %s", self.seed, self.world.step_index, self.reason)
        return StepResult(self.observe(), reward, self.done, self.reason, events)

    def _record(self, commands, joint, reward, events, annotations) -> dict[str, Any]:
        return {
            "step": self.world.step_index,
            "time": self.world.time,
            "action": None if joint is None else joint.names(),
            "commands": {str(k): [c.throttle, c.steer] for k, c in sorted(commands.items())},
            "vehicles": [v.to_dict() for v in self.world.vehicles],
            "reward": reward.to_dict(),
            "events": [e.to_dict() for e in events],
            **annotations,
        }


def env_step(episode: Episode, action_index: int) -> tuple[ObservationMatrix, float, bool, dict[str, Any]]:
    """Apply a joint action index through the PID trackers and advance one step."""
    joint = JointAction.from_index(action_index, episode.n)
    actions = dict(zip(episode.platoon_ids, joint.per_vehicle))
    commands, controls = track_actions(episode.world, episode.controls, actions)
    result = episode.advance(commands, controls, joint)
    info = {"reward": result.reward, "events": result.events, "reason": result.reason, "joint_action": joint}
    return result.observation, result.reward.R_global, result.done, info
