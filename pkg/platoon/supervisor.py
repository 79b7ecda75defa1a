"""
Per-step decision: risk assessment, strategy switch, then either LQR gap keeping
or a projected policy proposal tracked by the PID loops.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from .dynamics import ControlCommand, HighLevelAction, PidMemory, lateral_steer
from .env import CavControl, Episode, JointAction, StepResult, track_actions
from .errors import LqrError
from .fsm import FsmState, RiskAssessment, Strategy, assess_scene, fsm_step
from .lqr import LqrDesign, design_gap_controller, lqr_follow
from .twin import SafetyAssessment, joint_conflict_free, project_actions

if TYPE_CHECKING:
    from .config import ScenarioSpec
    from .policies import Policy

LOG = logging.getLogger(__name__)


@dataclass
class Decision:
    commands: dict[int, ControlCommand]
    controls: dict[int, CavControl]
    fsm: FsmState
    risk: RiskAssessment
    joint: JointAction | None = None
    proposed: JointAction | None = None
    safety: list[SafetyAssessment] = field(default_factory=list)

    def annotations(self) -> dict[str, Any]:
        return {
            "fsm": self.fsm.strategy.value,
            "risk": self.risk.level.value,
            "proposed": None if self.proposed is None else self.proposed.names(),
            "safety": [a.to_dict() for a in self.safety],
            "substitutions": sum(a.substituted for a in self.safety),
        }


def _lqr_decision(episode: Episode, fsm: FsmState, risk: RiskAssessment, design: LqrDesign) -> Decision:
    spec, world = episode.spec, episode.world
    cfg = world.config
    members = [world.vehicle(i) for i in episode.platoon_ids]
    accels = lqr_follow(members, design, spec.lqr.h_target, spec.env.cruise_speed, cfg.limits, cfg.gains.speed_kp)
    commands, controls = {}, {}
    for v in members:
        steer = lateral_steer(v, world.road, v.lane, cfg.gains, cfg.limits)
        commands[v.id] = ControlCommand(accels[v.id], steer)
        controls[v.id] = CavControl(spec.env.cruise_speed, v.lane, PidMemory())
    return Decision(commands, controls, fsm, risk)


def _holding_lane_is_safe(episode: Episode) -> bool:
    """S1 only sees the L_safe band; a stopped vehicle further ahead can already be
    inside the platoon's stopping distance."""
    cfg = episode.spec.twin
    if not cfg.enabled:
        return True
    hold = JointAction.uniform(HighLevelAction.IDLE, episode.n)
    return joint_conflict_free(episode.world, episode.controls, episode.platoon_ids, hold, cfg)


def decide(episode: Episode, fsm: FsmState, policy: "Policy", design: LqrDesign) -> Decision:
    spec, world = episode.spec, episode.world
    risk = assess_scene(world, episode.platoon_ids, spec.fsm.l_safe)
    fsm = fsm_step(fsm, risk, world.step_index, spec.fsm.dwell_steps)
    if fsm.strategy is Strategy.S1_LQR and not _holding_lane_is_safe(episode):
        LOG.debug("step %d: lane hold unsafe in the twin; S1 -> S2", world.step_index)
        fsm = FsmState(Strategy.S2_DATA_DRIVEN, world.step_index, 0)

    if fsm.strategy is Strategy.S1_LQR:
        try:
            return _lqr_decision(episode, fsm, risk, design)
        except LqrError as exc:
            LOG.warning("step %d: LQR unavailable (%s); using S2", world.step_index, exc)
            fsm = FsmState(Strategy.S2_DATA_DRIVEN, world.step_index, 0)

    proposed = policy.propose(episode, episode.observe())
    rng = np.random.default_rng([episode.seed, world.step_index])
    joint, safety = project_actions(world, episode.controls, episode.platoon_ids, proposed, spec.twin, rng)
    commands, controls = track_actions(world, episode.controls, dict(zip(episode.platoon_ids, joint.per_vehicle)))
    return Decision(commands, controls, fsm, risk, joint, proposed, safety)


class Supervisor:
    """Holds the strategy FSM of one episode and drives it step by step."""

    def __init__(self, spec: "ScenarioSpec", policy: "Policy"):
        self.policy = policy
        self.fsm = FsmState(spec.fsm.initial)
        self.design = design_gap_controller(spec.world.dt, spec.lqr.q, spec.lqr.r)

    def step(self, episode: Episode) -> StepResult:
        decision = decide(episode, self.fsm, self.policy, self.design)
        self.fsm = decision.fsm
        return episode.advance(decision.commands, decision.controls, decision.joint, decision.annotations())
