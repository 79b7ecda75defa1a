"""
Training loop: masked rollouts on the scenario mix, one-step TD advantages, trust-region
updates. Writes `train_stats.csv`, `checkpoint.npz` and `training_curve.html` to `out_dir`.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import plotly.express as px
from tqdm import tqdm

from .config import ScenarioSpec
from .env import N_ACTIONS, Episode, env_step
from .learner import (
    Batch,
    MomentumSgd,
    RolloutBuffer,
    TrainConfig,
    compute_advantages,
    masked_log_softmax,
    policy_net,
    save_checkpoint,
    stats_row,
    update,
    value_net,
)
from .policies import featurize
from .twin import step_mask

LOG = logging.getLogger(__name__)


@dataclass
class TrainResult:
    stats: pd.DataFrame
    checkpoint: Path
    curve: Path | None


class _EpisodeStream:
    """Round-robin over the training scenarios with a fresh seed per episode."""

    def __init__(self, spec: ScenarioSpec, seed: int):
        self.specs = [spec.with_scenario(kind) for kind in spec.train_scenarios]
        self.seed = seed
        self.counter = itertools.count()

    def next(self) -> Episode:
        k = next(self.counter)
        return Episode(self.specs[k % len(self.specs)], self.seed * 100_003 + k, record=False)


def _mask(episode: Episode, spec: ScenarioSpec, cfg: TrainConfig) -> np.ndarray:
    if not cfg.use_mask:
        return np.ones(N_ACTIONS ** episode.n, dtype=bool)
    return step_mask(episode, spec.twin)


def plot_training_curve(stats: pd.DataFrame, path: Path) -> Path:
    fig = px.line(stats, x="timesteps", y="mean_step_reward", markers=True, title="mean R_global per step")
    fig.write_html(str(path), include_plotlyjs="cdn")
    return path


def train(
    spec: ScenarioSpec,
    seed: int,
    out_dir: str | Path,
    cfg: TrainConfig | None = None,
    progress: bool = True,
) -> TrainResult:
    cfg = cfg or spec.train
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats_path = out / "train_stats.csv"
    stats_path.unlink(missing_ok=True)
    ckpt_path = out / "checkpoint.npz"

    rng = np.random.default_rng(seed)
    obs_dim = spec.env.max_vehicles * 5
    n_joint = N_ACTIONS ** spec.spawn.platoon_size
    policy = policy_net(obs_dim, n_joint, cfg.hidden, rng)
    value = value_net(obs_dim, cfg.hidden, rng)
    optimizer = MomentumSgd(policy.params() + value.params(), cfg.lr, cfg.momentum)

    stream = _EpisodeStream(spec, seed)
    episode = stream.next()
    episode_return = 0.0
    timesteps = 0
    rows = []
    meta = {"use_mask": cfg.use_mask, "seed": seed, "scenario": spec.name}

    bar = tqdm(total=cfg.total_steps, desc="train", unit="step", disable=not progress)
    for update_index in itertools.count(1):
        if timesteps >= cfg.total_steps:
            break
        buffer = RolloutBuffer()
        finished: list[float] = []
        for _ in range(cfg.n_steps):
            x = featurize(episode.observe(), spec)
            mask = _mask(episode, spec, cfg)
            logp = masked_log_softmax(policy(x[None, :]), mask[None, :])[0]
            action = int(rng.choice(n_joint, p=np.exp(logp)))
            v = float(value(x[None, :])[0, 0])
            _, reward, done, _ = env_step(episode, action)
            buffer.add(x, action, logp[action], reward, v, done, mask)
            episode_return += reward
            if done:
                finished.append(episode_return)
                episode, episode_return = stream.next(), 0.0
        timesteps += cfg.n_steps
        bar.update(cfg.n_steps)

        last_value = 0.0 if buffer.dones[-1] else float(value(featurize(episode.observe(), spec)[None, :])[0, 0])
        adv, ret = compute_advantages(buffer.rewards, buffer.values, buffer.dones, last_value, cfg.gamma)
        batch = Batch(np.stack(buffer.obs), np.asarray(buffer.actions), adv, ret, np.stack(buffer.masks))
        stats = update(policy, value, batch, cfg, rng, optimizer)

        row = stats_row(update_index, timesteps, stats, finished)
        row["mean_step_reward"] = float(np.mean(buffer.rewards))
        rows.append(row)
        pd.DataFrame([row]).to_csv(stats_path, mode="a", header=update_index == 1, index=False)
        bar.set_postfix(ret=row["mean_return"], kl=f"{stats.kl:.4f}")
        if update_index % cfg.checkpoint_every == 0:
            save_checkpoint(ckpt_path, policy, value, spec.config_hash(), rng.bit_generator.state, meta)
    bar.close()

    save_checkpoint(ckpt_path, policy, value, spec.config_hash(), rng.bit_generator.state, meta)
    frame = pd.DataFrame(rows)
    curve = plot_training_curve(frame, out / "training_curve.html") if not frame.empty else None
    LOG.info("trained %d steps in %d updates", timesteps, len(rows))
    return TrainResult(frame, ckpt_path, curve)
