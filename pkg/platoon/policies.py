"""Proposal policies for the data-driven strategy."""
from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Protocol

import numpy as np

from .dynamics import HighLevelAction
from .env import Episode, JointAction, N_ACTIONS, ObservationMatrix
from .errors import ConfigError
from .learner import Mlp, forward_policy, load_checkpoint
from .twin import step_mask

if TYPE_CHECKING:
    from .config import ScenarioSpec


def featurize(obs: ObservationMatrix, spec: "ScenarioSpec") -> np.ndarray:
    """Flatten the observation and scale each feature to roughly unit range."""
    scale = np.array([spec.env.d_vision or 1.0, spec.road.width, 10.0, 5.0, 1.0])
    return (obs.rows / scale).reshape(-1)


class Policy(Protocol):
    name: str

    def propose(self, episode: Episode, obs: ObservationMatrix) -> JointAction: ...


class ScriptedPolicy:
    """Keep lane, keep speed."""

    name = "scripted"

    def propose(self, episode: Episode, obs: ObservationMatrix) -> JointAction:
        return JointAction.uniform(HighLevelAction.IDLE, episode.n)


class RandomPolicy:
    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def propose(self, episode: Episode, obs: ObservationMatrix) -> JointAction:
        return JointAction.from_index(int(self.rng.integers(N_ACTIONS ** episode.n)), episode.n)


class NetworkPolicy:
    """Greedy action of a trained policy network under the twin-world admissible mask."""

    name = "checkpoint"

    def __init__(self, net: Mlp, spec: "ScenarioSpec", use_mask: bool = True):
        self.net = net
        self.spec = spec
        self.use_mask = use_mask

    def propose(self, episode: Episode, obs: ObservationMatrix) -> JointAction:
        x = featurize(obs, self.spec)[None, :]
        n_joint = N_ACTIONS ** episode.n
        if self.use_mask:
            mask = step_mask(episode, self.spec.twin)
        else:
            mask = np.ones(n_joint, dtype=bool)
        probs = forward_policy(self.net, x, mask[None, :])[0]
        return JointAction.from_index(int(np.argmax(probs)), episode.n)


def load_policy(source: str, spec: "ScenarioSpec", seed: int = 0) -> Policy:
    """`scripted`, `random`, or a path to a checkpoint file."""
    if source == "scripted":
        return ScriptedPolicy()
    if source == "random":
        return RandomPolicy(seed)
    path = Path(source)
    if not path.is_file():
        raise ConfigError(f"no such checkpoint {source!r}", "checkpoint")
    net, _, header = load_checkpoint(path)
    expected = N_ACTIONS ** spec.spawn.platoon_size
    if net.sizes[-1] != expected or net.sizes[0] != spec.env.max_vehicles * 5:
        raise ConfigError(
            f"checkpoint shape {net.sizes[0]}->{net.sizes[-1]} does not match the scenario", "checkpoint"
        )
    return NetworkPolicy(net, spec, use_mask=bool(header.get("use_mask", True)))
