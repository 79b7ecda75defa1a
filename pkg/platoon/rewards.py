"""
Hybrid reward: per-vehicle terms plus platoon-level terms.

R_global = mean(R_ind over platoon) + R_sys. Every term is bounded, so the
global reward is bounded by `reward_bounds(weights)`.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .dynamics import VehicleState
from .errors import ConfigError
from .world import WorldState


@dataclass(frozen=True)
class RewardWeights:
    w_C: float = 10.0
    w_L: float = 0.2
    w_F: float = 1.0
    w_A: float = 0.2
    w_M: float = 0.5
    w_D: float = 0.5
    w_H: float = 1.0
    w_S: float = 0.5

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0 or not math.isfinite(value):
                raise ConfigError("must be finite and >= 0", f"rewards.weights.{name}")


@dataclass(frozen=True)
class RewardParams:
    h_star: float = 10.0
    sigma_h: float = 5.0
    v_low: float = 20.0
    v_high: float = 28.0
    lane_tol: float = 0.3
    accel_scale: float = 3.0
    speed_std_scale: float = 5.0
    v_max: float = 30.0

    def __post_init__(self):
        if not self.v_high > self.v_low:
            raise ConfigError("v_high must exceed v_low", "rewards.params.v_high")
        if self.sigma_h <= 0 or self.accel_scale <= 0 or self.speed_std_scale <= 0 or self.v_max <= 0:
            raise ConfigError("scales must be > 0", "rewards.params")


@dataclass(frozen=True)
class IndividualTerms:
    r_C: float
    r_L: float
    r_F: float
    r_A: float
    R_ind: float


@dataclass(frozen=True)
class RewardBreakdown:
    individual: dict[int, IndividualTerms]
    r_M: float
    r_D: float
    r_H: float
    r_S: float
    R_sys: float
    R_global: float
    weights: RewardWeights = field(default_factory=RewardWeights)

    def to_dict(self) -> dict[str, Any]:
        return {
            "individual": {str(k): asdict(v) for k, v in self.individual.items()},
            "r_M": self.r_M, "r_D": self.r_D, "r_H": self.r_H, "r_S": self.r_S,
            "R_sys": self.R_sys, "R_global": self.R_global,
        }


def reward_bounds(weights: RewardWeights) -> tuple[float, float]:
    """Closed-form (min, max) of R_global for non-negative weights."""
    low = -weights.w_C - weights.w_A
    high = weights.w_L + weights.w_F + weights.w_M + weights.w_D + weights.w_H + weights.w_S
    return low, high


def platoon_headways(platoon: Sequence[VehicleState]) -> list[float]:
    """Bumper gap of each follower to its predecessor in front-to-back order."""
    ordered = sorted(platoon, key=lambda v: (-v.s, v.id))
    return [
        (ahead.s - behind.s) - 0.5 * (ahead.length + behind.length)
        for ahead, behind in zip(ordered, ordered[1:])
    ]


def individual_terms(
    vehicle: VehicleState, world: WorldState, weights: RewardWeights, params: RewardParams
) -> IndividualTerms:
    r_C = -1.0 if vehicle.crashed else 0.0
    r_L = 1.0 if abs(vehicle.y - world.road.lane_center(vehicle.lane)) <= params.lane_tol else 0.0
    r_F = min(max((vehicle.v - params.v_low) / (params.v_high - params.v_low), 0.0), 1.0)
    r_A = -min(1.0, (vehicle.a / params.accel_scale) ** 2)
    R_ind = weights.w_C * r_C + weights.w_L * r_L + weights.w_F * r_F + weights.w_A * r_A
    return IndividualTerms(r_C, r_L, r_F, r_A, R_ind)


def compute_reward(
    prev: WorldState,
    world: WorldState,
    platoon_ids: Sequence[int],
    weights: RewardWeights = RewardWeights(),
    params: RewardParams = RewardParams(),
) -> RewardBreakdown:
    members = [world.vehicle(i) for i in platoon_ids]
    n = len(members)
    individual = {v.id: individual_terms(v, world, weights, params) for v in members}

    modal = Counter(v.lane for v in members).most_common(1)[0][1]
    r_M = modal / n

    dt = world.config.dt
    progress = [world.vehicle(i).s - prev.vehicle(i).s for i in platoon_ids]
    r_D = min(max(sum(progress) / n / (params.v_max * dt), 0.0), 1.0)

    gaps = platoon_headways(members)
    r_H = float(np.mean([math.exp(-(((h - params.h_star) / params.sigma_h) ** 2)) for h in gaps])) if gaps else 0.0

    spread = float(np.std([v.v for v in members]))
    r_S = 1.0 - min(max(spread / params.speed_std_scale, 0.0), 1.0)

    R_sys = weights.w_M * r_M + weights.w_D * r_D + weights.w_H * r_H + weights.w_S * r_S
    R_global = sum(t.R_ind for t in individual.values()) / n + R_sys
    return RewardBreakdown(individual, r_M, r_D, r_H, r_S, R_sys, R_global, weights)
