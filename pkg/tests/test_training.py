"""
Tests for the training loop and trained-policy loading.
"""
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from platoon.config import load_spec
from platoon.env import Episode
from platoon.episode import run_episode
from platoon.errors import ConfigError
from platoon.learner import TrainConfig, load_checkpoint
from platoon.policies import NetworkPolicy, RandomPolicy, ScriptedPolicy, featurize, load_policy
from platoon.scenarios import ScenarioKind
from platoon.training import train

TINY = TrainConfig(total_steps=32, n_steps=16, minibatch=8, epochs=1, hidden=(8,), checkpoint_every=1)


@pytest.fixture
def plain_spec(small_spec):
    return replace(small_spec, train_scenarios=(ScenarioKind.PLAIN,))


@pytest.fixture
def trained(plain_spec, tmp_path):
    return train(plain_spec, seed=0, out_dir=tmp_path, cfg=TINY, progress=False)


def test_train_writes_stats_checkpoint_and_curve(trained, tmp_path, plain_spec):
    stats = pd.read_csv(tmp_path / "train_stats.csv")
    assert stats["update"].tolist() == [1, 2]
    assert stats["timesteps"].tolist() == [16, 32]
    assert {"loss", "kl", "lr", "rollbacks", "mean_step_reward"} <= set(stats.columns)
    assert (stats["kl"] <= TINY.kl_target).all()
    assert trained.checkpoint.is_file()
    assert trained.curve is not None and trained.curve.is_file()

    policy, value, header = load_checkpoint(trained.checkpoint)
    assert policy.sizes == (plain_spec.env.max_vehicles * 5, 8, 5 ** plain_spec.spawn.platoon_size)
    assert value.sizes[-1] == 1
    assert header["config_hash"] == plain_spec.config_hash()
    assert header["use_mask"] is True


def test_training_is_seed_deterministic(plain_spec, tmp_path):
    a = train(plain_spec, seed=4, out_dir=tmp_path / "a", cfg=TINY, progress=False)
    b = train(plain_spec, seed=4, out_dir=tmp_path / "b", cfg=TINY, progress=False)
    pa, _, _ = load_checkpoint(a.checkpoint)
    pb, _, _ = load_checkpoint(b.checkpoint)
    np.testing.assert_array_equal(pa.get_flat(), pb.get_flat())


def test_trained_checkpoint_drives_an_episode(trained, plain_spec):
    policy = load_policy(str(trained.checkpoint), plain_spec)
    assert isinstance(policy, NetworkPolicy)
    result = run_episode(plain_spec, seed=0, policy=str(trained.checkpoint))
    assert result.row.outcome != "failed"


def test_checkpoint_must_match_platoon_size(trained, plain_spec):
    other = replace(plain_spec, spawn=replace(plain_spec.spawn, platoon_size=2))
    with pytest.raises(ConfigError):
        load_policy(str(trained.checkpoint), other)


def test_builtin_policies(plain_spec):
    assert isinstance(load_policy("scripted", plain_spec), ScriptedPolicy)
    assert isinstance(load_policy("random", plain_spec), RandomPolicy)
    episode = Episode(plain_spec, 0, record=False)
    joint = RandomPolicy(3).propose(episode, episode.observe())
    assert len(joint.per_vehicle) == episode.n
    x = featurize(episode.observe(), plain_spec)
    assert x.shape == (plain_spec.env.max_vehicles * 5,)
    assert np.isfinite(x).all()


@pytest.mark.slow
def test_training_improves_on_the_initial_policy(tmp_path):
    """Full Plain + FlowOscillation run per seed: the last updates beat the first by half."""
    spec = load_spec(Path(__file__).resolve().parent.parent / "configs" / "train_mix.yaml")
    first, last = [], []
    for seed in spec.seeds:
        result = train(spec, seed=seed, out_dir=tmp_path / str(seed), progress=False)
        rewards = result.stats["mean_step_reward"]
        first.append(rewards.iloc[0])
        last.append(rewards.iloc[-5:].mean())
    baseline, trained = float(np.mean(first)), float(np.mean(last))
    assert trained - baseline >= 0.5 * abs(baseline)
