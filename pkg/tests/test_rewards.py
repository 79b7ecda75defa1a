"""
Tests for the hybrid reward terms and their bounds.
"""
import math
from dataclasses import asdict, replace

import numpy as np
import pytest

from platoon.errors import ConfigError
from platoon.rewards import (
    RewardParams,
    RewardWeights,
    compute_reward,
    individual_terms,
    platoon_headways,
    reward_bounds,
)

from .builders import cav, world_of

W, PARAMS = RewardWeights(), RewardParams()


def _pair(moved: float = 2.0, **kw):
    prev = world_of(cav(0, 1, 100.0, v=28.0), cav(1, 1, 85.0, v=28.0))
    world = world_of(
        cav(0, 1, 100.0 + moved, v=28.0, **kw.get("lead", {})),
        cav(1, 1, 85.0 + moved, v=28.0, **kw.get("follower", {})),
        step=1,
    )
    return prev, world


def test_individual_terms():
    world = world_of(cav(0, 1, 100.0, v=24.0))
    t = individual_terms(world.vehicle(0), world, W, PARAMS)
    assert (t.r_C, t.r_L, t.r_F, t.r_A) == (0.0, 1.0, pytest.approx(0.5), 0.0)
    crashed = world_of(replace(cav(0, 1, 100.0, v=0.0, crashed=True), y=5.0, a=-6.0))
    t = individual_terms(crashed.vehicle(0), crashed, W, PARAMS)
    assert (t.r_C, t.r_L, t.r_F, t.r_A) == (-1.0, 0.0, 0.0, -1.0)
    assert t.R_ind == pytest.approx(-W.w_C - W.w_A)


def test_ideal_step_reaches_upper_bound():
    """Centred, at speed, at the target headway, full progress: every term is at its maximum."""
    prev, world = _pair(moved=PARAMS.v_max * world_of().config.dt)
    r = compute_reward(prev, world, (0, 1))
    assert (r.r_M, r.r_D, r.r_H, r.r_S) == pytest.approx((1.0, 1.0, 1.0, 1.0))
    assert r.R_global == pytest.approx(reward_bounds(W)[1])
    assert r.R_global == pytest.approx(sum(t.R_ind for t in r.individual.values()) / 2 + r.R_sys)


def test_progress_term_is_clamped():
    prev, world = _pair(moved=-1.0)
    assert compute_reward(prev, world, (0, 1)).r_D == 0.0
    prev, world = _pair(moved=10.0)
    assert compute_reward(prev, world, (0, 1)).r_D == 1.0


def test_modal_lane_fraction():
    prev = world_of(cav(0, 1, 100.0), cav(1, 1, 85.0), cav(2, 1, 70.0))
    world = world_of(cav(0, 1, 101.0), cav(1, 2, 86.0), cav(2, 1, 71.0), step=1)
    assert compute_reward(prev, world, (0, 1, 2)).r_M == pytest.approx(2 / 3)


def test_headway_term_peaks_at_target():
    grid = np.linspace(0.0, 30.0, 301)
    values = [math.exp(-(((h - PARAMS.h_star) / PARAMS.sigma_h) ** 2)) for h in grid]
    assert grid[int(np.argmax(values))] == pytest.approx(PARAMS.h_star)
    assert platoon_headways([cav(0, 1, 100.0), cav(1, 1, 85.0)]) == [pytest.approx(10.0)]


def test_speed_spread_term():
    prev = world_of(cav(0, 1, 100.0, v=20.0), cav(1, 1, 85.0, v=30.0))
    world = world_of(cav(0, 1, 101.0, v=20.0), cav(1, 1, 86.0, v=30.0), step=1)
    assert compute_reward(prev, world, (0, 1)).r_S == pytest.approx(0.0)


def test_breakdown_serialises():
    prev, world = _pair()
    d = compute_reward(prev, world, (0, 1)).to_dict()
    assert set(d["individual"]) == {"0", "1"}
    assert {"r_M", "r_D", "r_H", "r_S", "R_sys", "R_global"} <= set(d)


def test_parameter_validation():
    with pytest.raises(ConfigError):
        RewardWeights(w_C=-1.0)
    with pytest.raises(ConfigError):
        RewardParams(v_low=30.0, v_high=20.0)


def test_default_weights_and_bounds():
    assert asdict(RewardWeights()) == {
        "w_C": 10.0, "w_L": 0.2, "w_F": 1.0, "w_A": 0.2,
        "w_M": 0.5, "w_D": 0.5, "w_H": 1.0, "w_S": 0.5,
    }
    low, high = reward_bounds(RewardWeights())
    assert low == pytest.approx(-10.2)
    assert high == pytest.approx(3.7)


def _random_transition(rng):
    n = int(rng.integers(1, 5))
    prev, world = [], []
    for i in range(n):
        lane = int(rng.integers(0, 3))
        s = float(rng.uniform(0.0, 900.0))
        kw = {
            "v": float(rng.uniform(0.0, 35.0)),
            "a": float(rng.uniform(-8.0, 5.0)),
            "crashed": bool(rng.random() < 0.1),
        }
        prev.append(cav(i, lane, s - float(rng.uniform(-2.0, 4.0))))
        world.append(replace(cav(i, lane, s, **kw), y=cav(i, lane, s).y + float(rng.uniform(-2.0, 2.0))))
    return world_of(*prev), world_of(*world, step=1), tuple(range(n))


@pytest.mark.slow
def test_random_transitions_stay_in_bounds_and_decompose():
    rng = np.random.default_rng(7)
    weights = RewardWeights(**{k: float(rng.uniform(0.0, 5.0)) for k in asdict(W)})
    for w in (W, weights):
        low, high = reward_bounds(w)
        for _ in range(5_000):
            prev, world, ids = _random_transition(rng)
            r = compute_reward(prev, world, ids, w)
            assert r.R_global == sum(t.R_ind for t in r.individual.values()) / len(ids) + r.R_sys
            assert low - 1e-9 <= r.R_global <= high + 1e-9
