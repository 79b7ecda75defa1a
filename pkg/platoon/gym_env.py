"""gymnasium wrapper around `Episode` for use with external RL tooling."""
from __future__ import annotations

from typing import TYPE_CHECKING, Any

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from .env import N_ACTIONS, Episode, env_step
from .policies import featurize
from .twin import step_mask

if TYPE_CHECKING:
    from .config import ScenarioSpec


class PlatoonEnv(gym.Env):
    """Discrete(5**N) joint actions; observations are the scaled, flattened observation matrix.

    `info["action_mask"]` carries the twin-world admissible mask when `use_mask` is set.
    """

    metadata = {"render_modes": []}

    def __init__(self, spec: "ScenarioSpec", use_mask: bool = True):
        super().__init__()
        self.spec = spec
        self.use_mask = use_mask
        n = spec.spawn.platoon_size
        self.action_space = spaces.Discrete(N_ACTIONS ** n)
        self.observation_space = spaces.Box(-np.inf, np.inf, shape=(spec.env.max_vehicles * 5,), dtype=np.float64)
        self.episode: Episode | None = None

    def _info(self) -> dict[str, Any]:
        ep = self.episode
        if self.use_mask:
            mask = step_mask(ep, self.spec.twin)
        else:
            mask = np.ones(self.action_space.n, dtype=bool)
        return {"action_mask": mask, "step": ep.world.step_index}

    def reset(self, *, seed: int | None = None, options: dict | None = None):
        super().reset(seed=seed)
        episode_seed = int(self.np_random.integers(2**31 - 1)) if seed is None else int(seed)
        self.episode = Episode(self.spec, episode_seed, record=False)
        return featurize(self.episode.observe(), self.spec), self._info()

    def step(self, action):
        if self.episode is None:
            raise RuntimeError("call reset() before step()")
        obs, reward, done, info = env_step(self.episode, int(action))
        truncated = info["reason"] == "timeout"
        terminated = done and not truncated
        out = {"reason": info["reason"], "reward_terms": info["reward"].to_dict()}
        if not done:
            out |= self._info()
        return featurize(obs, self.spec), float(reward), terminated, truncated, out
