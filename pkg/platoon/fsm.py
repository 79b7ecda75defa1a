"""
Strategy switching between LQR gap keeping (S1) and the learned policy (S2).

Escalation to S2 is immediate on an Elevated scene; returning to S1 needs
`dwell_steps` consecutive RoutineSafe assessments.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import ConfigError
from .world import WorldState

LOG = logging.getLogger(__name__)


class Strategy(str, Enum):
    S1_LQR = "S1_LQR"
    S2_DATA_DRIVEN = "S2_DataDriven"


class RiskLevel(str, Enum):
    ROUTINE_SAFE = "RoutineSafe"
    ELEVATED = "Elevated"


@dataclass(frozen=True)
class FsmConfig:
    l_safe: float = 50.0
    dwell_steps: int = 15
    initial: Strategy = Strategy.S2_DATA_DRIVEN

    def __post_init__(self):
        if self.l_safe < 0:
            raise ConfigError("must be >= 0", "fsm.l_safe")
        if self.dwell_steps < 1:
            raise ConfigError("must be >= 1", "fsm.dwell_steps")


@dataclass(frozen=True)
class RiskAssessment:
    same_lane: bool
    clear_zone: bool
    intruders: tuple[int, ...] = ()

    @property
    def level(self) -> RiskLevel:
        return RiskLevel.ROUTINE_SAFE if self.same_lane and self.clear_zone else RiskLevel.ELEVATED


@dataclass(frozen=True)
class FsmState:
    strategy: Strategy
    entered_at: int = 0
    dwell: int = 0


def assess_scene(world: WorldState, platoon_ids: Sequence[int], l_safe: float) -> RiskAssessment:
    """Platoon in one lane, and no other vehicle inside [tail - l_safe, head + l_safe]."""
    members = [world.vehicle(i) for i in platoon_ids]
    same_lane = len({v.lane for v in members}) == 1
    lo = min(v.s for v in members) - l_safe
    hi = max(v.s for v in members) + l_safe
    ids = set(platoon_ids)
    intruders = tuple(sorted(v.id for v in world.vehicles if v.id not in ids and lo <= v.s <= hi))
    return RiskAssessment(same_lane, not intruders, intruders)


def fsm_step(state: FsmState, assessment: RiskAssessment, step_index: int, dwell_steps: int = 15) -> FsmState:
    if assessment.level is RiskLevel.ELEVATED:
        if state.strategy is not Strategy.S2_DATA_DRIVEN:
            LOG.debug("step %d: S1 -> S2", step_index)
            return FsmState(Strategy.S2_DATA_DRIVEN, step_index, 0)
        return FsmState(state.strategy, state.entered_at, 0)

    dwell = state.dwell + 1
    if state.strategy is Strategy.S2_DATA_DRIVEN and dwell >= dwell_steps:
        LOG.debug("step %d: S2 -> S1 after %d safe steps", step_index, dwell)
        return FsmState(Strategy.S1_LQR, step_index, dwell)
    return FsmState(state.strategy, state.entered_at, dwell)
