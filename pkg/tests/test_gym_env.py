"""Tests for the gymnasium wrapper."""
import numpy as np
import pytest

from platoon.gym_env import PlatoonEnv


def test_spaces_and_reset(small_spec):
    env = PlatoonEnv(small_spec)
    assert env.action_space.n == 125
    obs, info = env.reset(seed=3)
    assert obs.shape == env.observation_space.shape == (60,)
    assert info["action_mask"].shape == (125,)
    assert info["action_mask"].dtype == bool
    assert info["action_mask"].any()


def test_reset_with_seed_is_reproducible(small_spec):
    env = PlatoonEnv(small_spec)
    a, _ = env.reset(seed=5)
    b, _ = env.reset(seed=5)
    np.testing.assert_array_equal(a, b)


def test_step_until_episode_ends(small_spec):
    env = PlatoonEnv(small_spec)
    _, info = env.reset(seed=0)
    terminated = truncated = False
    steps = 0
    while not (terminated or truncated):
        action = int(np.flatnonzero(info["action_mask"])[0])
        obs, reward, terminated, truncated, info = env.step(action)
        assert np.isfinite(reward)
        assert obs.shape == (60,)
        steps += 1
    assert steps <= small_spec.env.step_cap
    assert info["reason"] in ("collision", "road_end", "timeout")
    assert truncated == (info["reason"] == "timeout")
    assert "action_mask" not in info


def test_unmasked_env_allows_everything(small_spec):
    env = PlatoonEnv(small_spec, use_mask=False)
    _, info = env.reset(seed=1)
    assert info["action_mask"].all()


def test_step_before_reset_raises(small_spec):
    with pytest.raises(RuntimeError):
        PlatoonEnv(small_spec).step(0)
