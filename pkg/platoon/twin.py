"""
Twin-world safety projection.

A deterministic copy of the world is rolled forward over a short horizon to check each
platoon vehicle's proposed action. An action is unsafe when its trajectory conflicts
with anyone inside the horizon, or when the vehicle ends the horizon closer to a
neighbour than it could stop behind (or than a faster vehicle behind could stop, after a
lane change). Vehicles are checked in priority order (short time headway first); an
unsafe action is replaced by the best alternative whose safety margin is at least that
of the original, and later vehicles are checked against the updated trajectories.

Candidate rollouts run batched on the array kernel in `platoon.fleet`;
`reference_rollout` steps the scalar world and is kept as the ground truth it is
tested against.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import TYPE_CHECKING, Any, Mapping, Sequence

import numpy as np

from .dynamics import HighLevelAction
from .env import CavControl, JointAction, N_ACTIONS, track_actions
from .errors import ConfigError
from .fleet import Fleet
from .world import WorldState, step_world

if TYPE_CHECKING:
    from .env import Episode

LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class TwinConfig:
    enabled: bool = True
    horizon: int = 15
    buffer: float = 0.5
    sigma_scale: float = 1e-3
    min_speed: float = 0.1
    d_vision: float = 100.0
    predict_mobil: bool = True
    stop_decel: float = 4.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("must be >= 1", "twin.horizon")
        if self.buffer < 0:
            raise ConfigError("must be >= 0", "twin.buffer")
        if self.d_vision <= 0:
            raise ConfigError("must be > 0", "twin.d_vision")
        if not self.stop_decel > 0:
            raise ConfigError("must be > 0", "twin.stop_decel")


class Maneuver(str, Enum):
    LANE_KEEP = "lane_keep"
    LANE_CHANGE = "lane_change"


def maneuver_of(action: HighLevelAction, lane: int, num_lanes: int) -> tuple[Maneuver, int]:
    """Maneuver class and target lane implied by an action taken from `lane`."""
    if action is HighLevelAction.LANE_LEFT and lane > 0:
        return Maneuver.LANE_CHANGE, lane - 1
    if action is HighLevelAction.LANE_RIGHT and lane < num_lanes - 1:
        return Maneuver.LANE_CHANGE, lane + 1
    return Maneuver.LANE_KEEP, lane


# ----------------------------
# Rollouts
# ----------------------------
@dataclass(frozen=True)
class Rollout:
    """Predicted positions, one row per step (row 0 is the snapshot). Vehicles that
    leave the road mid-rollout are NaN from then on."""

    ids: tuple[int, ...]
    s: np.ndarray
    y: np.ndarray
    lane: np.ndarray
    v: np.ndarray
    length: np.ndarray
    width: np.ndarray
    actions: Mapping[int, HighLevelAction]

    @property
    def column(self) -> dict[int, int]:
        return {vid: k for k, vid in enumerate(self.ids)}

    def trajectory(self, vehicle_id: int) -> np.ndarray:
        k = self.column[vehicle_id]
        return np.stack([self.s[:, k], self.y[:, k]], axis=1)

    def conflict_steps(self, vehicle_id: int, buffer: float) -> np.ndarray:
        """Steps at which `vehicle_id` comes within the buffered collision threshold of anyone."""
        i = self.column[vehicle_id]
        ds = self.s - self.s[:, [i]]
        dy = self.y - self.y[:, [i]]
        with np.errstate(invalid="ignore"):
            gate = np.abs(dy) < 0.5 * (self.width + self.width[i]) + buffer
            hit = gate & (np.hypot(ds, dy) < 0.5 * (self.length + self.length[i]) + buffer)
        hit[:, i] = False
        return np.flatnonzero(hit.any(axis=1))

    def conflicts(self, vehicle_id: int, buffer: float) -> bool:
        return self.conflict_steps(vehicle_id, buffer).size > 0

    def unrecoverable(self, vehicle_id: int, buffer: float, stop_decel: float) -> bool:
        """True when the last row leaves `vehicle_id` too close to stop behind a vehicle
        ahead braking at `stop_decel`, or, after a lane change, too close ahead of a faster
        vehicle that would have to brake for it."""
        i = self.column[vehicle_id]
        s, y, v = self.s[-1], self.y[-1], self.v[-1]
        if math.isnan(s[i]):
            return False
        others = np.ones(len(self.ids), dtype=bool)
        others[i] = False
        half = 0.5 * (self.length + self.length[i])
        with np.errstate(invalid="ignore"):
            near = others & (np.abs(y - y[i]) < 0.5 * (self.width + self.width[i]) + buffer)
            ahead = near & (s >= s[i])
            short = (s - s[i]) - half < np.maximum(v[i] ** 2 - v ** 2, 0.0) / (2.0 * stop_decel) + buffer
            if (ahead & short).any():
                return True
            if self.lane[-1, i] == self.lane[0, i]:
                return False
            behind = near & (s < s[i])
            cut = (s[i] - s) - half < np.maximum(v ** 2 - v[i] ** 2, 0.0) / (2.0 * stop_decel) + buffer
            return bool((behind & cut).any())


def _unsafe(rollout: Rollout, vehicle_id: int, cfg: TwinConfig) -> bool:
    return rollout.conflicts(vehicle_id, cfg.buffer) or rollout.unrecoverable(vehicle_id, cfg.buffer, cfg.stop_decel)


@dataclass(frozen=True)
class TwinWorld:
    world: WorldState
    controls: Mapping[int, CavControl]
    platoon_ids: tuple[int, ...]
    horizon: int

    @classmethod
    def from_world(
        cls, world: WorldState, controls: Mapping[int, CavControl], platoon_ids: Sequence[int], cfg: TwinConfig
    ) -> "TwinWorld":
        return cls(world.as_prediction(cfg.predict_mobil), dict(controls), tuple(platoon_ids), cfg.horizon)

    @cached_property
    def fleet(self) -> Fleet:
        return Fleet(self.world, self.controls)

    def rollout(self, actions: Mapping[int, HighLevelAction]) -> Rollout:
        return rollout_twin(self, actions, self.horizon)

    def rollouts(self, candidates: Sequence[Mapping[int, HighLevelAction]]) -> list[Rollout]:
        return rollout_batch(self, candidates, self.horizon)


def rollout_batch(
    twin: TwinWorld, candidates: Sequence[Mapping[int, HighLevelAction]], horizon: int
) -> list[Rollout]:
    """One rollout per candidate joint action, all advanced together on the array kernel."""
    if not candidates:
        return []
    fleet = twin.fleet
    trace = fleet.rollout(candidates, horizon)
    return [
        Rollout(trace.ids, trace.s[b], trace.y[b], trace.lane[b], trace.v[b], fleet.length, fleet.width, dict(c))
        for b, c in enumerate(candidates)
    ]


def rollout_twin(twin: TwinWorld, actions: Mapping[int, HighLevelAction], horizon: int) -> Rollout:
    """Hold each platoon vehicle's action for `horizon` steps; HDVs follow their drivers.

    The snapshot in `twin` is never modified.
    """
    return rollout_batch(twin, [actions], horizon)[0]


def reference_rollout(twin: TwinWorld, actions: Mapping[int, HighLevelAction], horizon: int) -> Rollout:
    """`rollout_twin` computed by stepping the scalar world one vehicle at a time."""
    world, controls = twin.world, dict(twin.controls)
    live = {vid: a for vid, a in actions.items() if not world.vehicle(vid).crashed}
    ids = tuple(sorted(v.id for v in world.vehicles))
    col = {vid: k for k, vid in enumerate(ids)}
    shape = (horizon + 1, len(ids))
    s, y, lane, v = (np.full(shape, np.nan) for _ in range(4))

    def record(k: int, w: WorldState):
        for veh in w.vehicles:
            j = col.get(veh.id)
            if j is not None:
                s[k, j], y[k, j], lane[k, j], v[k, j] = veh.s, veh.y, veh.lane, veh.v

    record(0, world)
    for k in range(1, horizon + 1):
        commands, controls = track_actions(world, controls, {vid: a for vid, a in live.items() if not world.vehicle(vid).crashed})
        world, _ = step_world(world, commands)
        record(k, world)
    length = np.array([twin.world.vehicle(i).length for i in ids])
    width = np.array([twin.world.vehicle(i).width for i in ids])
    return Rollout(ids, s, y, lane, v, length, width, dict(actions))


# ----------------------------
# Priority and margin
# ----------------------------
@dataclass(frozen=True)
class SafetyPriority:
    vehicle_id: int
    d_headway: float
    v: float
    sigma: float
    p: float


def safety_priority(
    world: WorldState,
    vehicle_id: int,
    rng: np.random.Generator,
    sigma_scale: float = 1e-3,
    d_vision: float = 100.0,
    min_speed: float = 0.1,
) -> SafetyPriority:
    """p = -ln(d_headway / v) + U(0, sigma_scale); higher means more urgent."""
    ego = world.vehicle(vehicle_id)
    leader, _ = world.lane_neighbors(ego.lane, ego.s, exclude=ego.id)
    d = d_vision
    if leader is not None and leader.s - ego.s <= d_vision:
        d = (leader.s - ego.s) - 0.5 * (leader.length + ego.length)
    v = max(ego.v, min_speed)
    sigma = float(rng.uniform(0.0, sigma_scale)) if sigma_scale > 0 else 0.0
    return SafetyPriority(vehicle_id, d, v, sigma, -math.log(max(d, 1e-2) / v) + sigma)


def safety_margin(
    rollout: Rollout, vehicle_id: int, maneuver: Maneuver, target_lane: int | None = None, d_vision: float = 100.0
) -> float:
    """Minimum over the horizon of the bumper gap to the relevant neighbours.

    Lane keep looks at the current-lane leader; a lane change also looks at the target-lane
    leader and follower. Missing neighbours count as `d_vision`.
    """
    i = rollout.column[vehicle_id]
    s, lane = rollout.s, rollout.lane
    se = s[:, [i]]
    others = np.ones(len(rollout.ids), dtype=bool)
    others[i] = False
    half = 0.5 * (rollout.length + rollout.length[i])

    with np.errstate(invalid="ignore"):
        ahead = (s >= se) & others
        behind = (s < se) & others

        def closest(lane_values: np.ndarray, side: np.ndarray, sign: float) -> np.ndarray:
            mask = side & (lane == lane_values)
            gaps = np.where(mask, sign * (s - se) - half, np.inf)
            return np.minimum(gaps.min(axis=1), d_vision)

        d = closest(lane[:, [i]], ahead, 1.0)
        if maneuver is Maneuver.LANE_CHANGE and target_lane is not None:
            target = np.full((s.shape[0], 1), float(target_lane))
            d = np.minimum(d, np.minimum(closest(target, ahead, 1.0), closest(target, behind, -1.0)))
    valid = ~np.isnan(se[:, 0])
    return float(d[valid].min()) if valid.any() else float(d_vision)


def _margin(rollout: Rollout, world: WorldState, vehicle_id: int, action: HighLevelAction, d_vision: float) -> float:
    ego = world.vehicle(vehicle_id)
    maneuver, target = maneuver_of(action, ego.lane, world.road.num_lanes)
    return safety_margin(rollout, vehicle_id, maneuver, target, d_vision)


# ----------------------------
# Projection
# ----------------------------
@dataclass(frozen=True)
class SafetyAssessment:
    vehicle_id: int
    priority: float
    original: HighLevelAction
    chosen: HighLevelAction
    margin: float
    chosen_margin: float
    conflict: bool
    unsafe_best_effort: bool = False
    trajectory: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def substituted(self) -> bool:
        return self.chosen is not self.original

    def to_dict(self) -> dict[str, Any]:
        return {
            "vehicle_id": self.vehicle_id, "priority": self.priority,
            "original": self.original.name, "chosen": self.chosen.name,
            "margin": self.margin, "chosen_margin": self.chosen_margin,
            "conflict": self.conflict, "unsafe_best_effort": self.unsafe_best_effort,
        }


def _substitute(
    twin: TwinWorld,
    world: WorldState,
    base: Rollout,
    actions: dict[int, HighLevelAction],
    vid: int,
    priority: float,
    cfg: TwinConfig,
) -> tuple[SafetyAssessment, Rollout]:
    """Best replacement for an unsafe action of `vid`: safe first, then widest margin,
    then enum order. Alternatives with a smaller margin than the original are skipped."""
    original = actions[vid]
    original_margin = _margin(base, world, vid, original, cfg.d_vision)
    alternatives = [a for a in HighLevelAction if a is not original]
    trials = twin.rollouts([{**actions, vid: a} for a in alternatives])
    best = (False, original_margin, 0, original, base)
    for order, (candidate, trial) in enumerate(zip(alternatives, trials)):
        margin = _margin(trial, world, vid, candidate, cfg.d_vision)
        if margin < original_margin:
            continue
        key = (not _unsafe(trial, vid, cfg), margin, -(order + 1))
        if key > best[:3]:
            best = (*key, candidate, trial)
    safe, chosen_margin, _, chosen, roll = best
    if chosen is not original:
        actions[vid] = chosen
    if not safe:
        LOG.debug("vehicle %d: no safe action at step %d", vid, world.step_index)
    assessment = SafetyAssessment(
        vid, priority, original, chosen, original_margin, chosen_margin, True, not safe, roll.trajectory(vid),
    )
    return assessment, roll


def project_actions(
    world: WorldState,
    controls: Mapping[int, CavControl],
    platoon_ids: Sequence[int],
    proposed: JointAction,
    cfg: TwinConfig = TwinConfig(),
    rng: np.random.Generator | None = None,
) -> tuple[JointAction, list[SafetyAssessment]]:
    """Replace unsafe per-vehicle actions. The world passed in is never modified.

    After the priority sweep, vehicles that were safe when checked are checked again
    against the final joint rollout, since a later substitution can close a gap they
    relied on.
    """
    if not cfg.enabled:
        return proposed, []
    if len(proposed.per_vehicle) != len(platoon_ids):
        raise ConfigError("joint action size does not match platoon", "twin")
    rng = rng if rng is not None else np.random.default_rng(0)
    twin = TwinWorld.from_world(world, controls, platoon_ids, cfg)
    actions = dict(zip(platoon_ids, proposed.per_vehicle))
    live = [vid for vid in platoon_ids if not world.vehicle(vid).crashed]
    priorities = [safety_priority(world, vid, rng, cfg.sigma_scale, cfg.d_vision, cfg.min_speed) for vid in live]
    priorities.sort(key=lambda p: (-p.p, p.vehicle_id))

    base = twin.rollout(actions)
    assessments: list[SafetyAssessment] = []
    for pr in priorities:
        vid = pr.vehicle_id
        if not _unsafe(base, vid, cfg):
            margin = _margin(base, world, vid, actions[vid], cfg.d_vision)
            assessments.append(SafetyAssessment(
                vid, pr.p, actions[vid], actions[vid], margin, margin, False, False, base.trajectory(vid),
            ))
            continue
        assessment, base = _substitute(twin, world, base, actions, vid, pr.p, cfg)
        assessments.append(assessment)

    if any(a.substituted for a in assessments):
        for k, done in enumerate(assessments):
            if done.conflict or not _unsafe(base, done.vehicle_id, cfg):
                continue
            LOG.debug("vehicle %d: unsafe after later substitutions", done.vehicle_id)
            assessments[k], base = _substitute(twin, world, base, actions, done.vehicle_id, done.priority, cfg)
    return JointAction(tuple(actions[vid] for vid in platoon_ids)), assessments


def admissible_mask(
    world: WorldState,
    controls: Mapping[int, CavControl],
    platoon_ids: Sequence[int],
    cfg: TwinConfig = TwinConfig(),
) -> tuple[np.ndarray, np.ndarray]:
    """Joint-action mask built from per-vehicle twin checks (others held at IDLE).

    A vehicle with no safe action keeps its largest-margin action, so the joint mask is
    never empty. Returns (joint mask of size 5**n, per-vehicle (n, 5) mask).
    """
    n = len(platoon_ids)
    per_vehicle = np.ones((n, N_ACTIONS), dtype=bool)
    if cfg.enabled:
        twin = TwinWorld.from_world(world, controls, platoon_ids, cfg)
        idle = {vid: HighLevelAction.IDLE for vid in platoon_ids}
        live = [(k, vid) for k, vid in enumerate(platoon_ids) if not world.vehicle(vid).crashed]
        moves = [a for a in HighLevelAction if a is not HighLevelAction.IDLE]
        rolls = twin.rollouts([idle] + [{**idle, vid: a} for _, vid in live for a in moves])
        base = rolls[0]
        for j, (k, vid) in enumerate(live):
            trials = {HighLevelAction.IDLE: base, **dict(zip(moves, rolls[1 + j * len(moves):]))}
            margins = np.empty(N_ACTIONS)
            for a, roll in trials.items():
                per_vehicle[k, a] = not _unsafe(roll, vid, cfg)
                margins[a] = _margin(roll, world, vid, a, cfg.d_vision)
            if not per_vehicle[k].any():
                per_vehicle[k, int(np.argmax(margins))] = True
    joint = np.ones(1, dtype=bool)
    for k in range(n):
        joint = np.logical_and.outer(joint, per_vehicle[k]).reshape(-1)
    return joint, per_vehicle


def step_mask(episode: "Episode", cfg: TwinConfig | None = None) -> np.ndarray:
    """Joint admissible mask for the episode's current step, computed at most once per step."""
    cfg = cfg if cfg is not None else episode.spec.twin
    key = ("admissible_mask", cfg)
    mask = episode.step_cache.get(key)
    if mask is None:
        mask, _ = admissible_mask(episode.world, episode.controls, episode.platoon_ids, cfg)
        mask.setflags(write=False)
        episode.step_cache[key] = mask
    return mask


@dataclass(frozen=True)
class ExhaustiveResult:
    best: JointAction | None
    best_margin: float
    safe_count: int


def exhaustive_project(
    world: WorldState,
    controls: Mapping[int, CavControl],
    platoon_ids: Sequence[int],
    cfg: TwinConfig = TwinConfig(),
) -> ExhaustiveResult:
    """Search all joint actions for the safe one with the largest worst-case margin."""
    twin = TwinWorld.from_world(world, controls, platoon_ids, cfg)
    live = [vid for vid in platoon_ids if not world.vehicle(vid).crashed]
    combos = list(itertools.product(HighLevelAction, repeat=len(platoon_ids)))
    rolls = twin.rollouts([dict(zip(platoon_ids, combo)) for combo in combos])
    best, best_margin, safe_count = None, -math.inf, 0
    for combo, roll in zip(combos, rolls):
        if any(_unsafe(roll, vid, cfg) for vid in live):
            continue
        safe_count += 1
        actions = roll.actions
        margin = min((_margin(roll, world, vid, actions[vid], cfg.d_vision) for vid in live), default=math.inf)
        if margin > best_margin:
            best, best_margin = JointAction(combo), margin
    return ExhaustiveResult(best, best_margin, safe_count)


def joint_conflict_free(
    world: WorldState,
    controls: Mapping[int, CavControl],
    platoon_ids: Sequence[int],
    joint: JointAction,
    cfg: TwinConfig = TwinConfig(),
) -> bool:
    twin = TwinWorld.from_world(world, controls, platoon_ids, cfg)
    roll = twin.rollout(dict(zip(platoon_ids, joint.per_vehicle)))
    return not any(_unsafe(roll, vid, cfg) for vid in platoon_ids if not world.vehicle(vid).crashed)
