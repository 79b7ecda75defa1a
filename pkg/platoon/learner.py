"""
Masked actor-critic over the joint action space, in plain numpy.

Separate policy and value MLPs (tanh hidden layers) with hand-written backprop.
Loss is -(J_pi - beta1 * J_V + beta2 * H) with one-step TD advantages. Each epoch of
minibatch SGD is accepted only if the mean KL(old || new) over the rollout stays
within `kl_target`; otherwise it is rolled back and the step size halved.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, MaskError, TrainingError

LOG = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = 1


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 100_000
    n_steps: int = 256
    minibatch: int = 128
    epochs: int = 4
    lr: float = 5e-4
    momentum: float = 0.9
    gamma: float = 0.8
    beta1: float = 1.0
    beta2: float = 0.01
    kl_target: float = 0.02
    max_grad_norm: float = 0.5
    max_rollbacks: int = 8
    hidden: tuple[int, ...] = (128, 128)
    use_mask: bool = True
    checkpoint_every: int = 10

    def __post_init__(self):
        if self.n_steps < 1 or self.minibatch < 1 or self.epochs < 1:
            raise ConfigError("n_steps, minibatch and epochs must be >= 1", "train")
        if self.minibatch > self.n_steps:
            raise ConfigError("minibatch larger than rollout", "train.minibatch")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("must be in [0, 1]", "train.gamma")
        if self.lr <= 0 or self.kl_target <= 0:
            raise ConfigError("lr and kl_target must be > 0", "train")
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError("need at least one hidden layer", "train.hidden")


# ----------------------------
# Networks
# ----------------------------
def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Mlp:
    """Dense tanh network; weights are (in, out) so y = x @ W + b."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, out_gain: float = 1.0):
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        last = len(self.sizes) - 2
        for k, (n_in, n_out) in enumerate(zip(self.sizes, self.sizes[1:])):
            gain = out_gain if k == last else math.sqrt(2.0)
            self.weights.append(orthogonal((n_in, n_out), gain, rng))
            self.biases.append(np.zeros(n_out))

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        acts = [x]
        h = x
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if k == len(self.weights) - 1 else np.tanh(z)
            acts.append(h)
        return h, acts

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, acts: list[np.ndarray], grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients aligned with `params()`."""
        grads: list[np.ndarray] = []
        g = grad_out
        for k in range(len(self.weights) - 1, -1, -1):
            a_in = acts[k]
            grads = [a_in.T @ g, g.sum(axis=0)] + grads
            if k:
                g = (g @ self.weights[k].T) * (1.0 - a_in * a_in)
        return grads

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.params():
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    def copy(self) -> "Mlp":
        clone = object.__new__(Mlp)
        clone.sizes = self.sizes
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone


def policy_net(obs_dim: int, n_actions: int, hidden: Sequence[int], rng: np.random.Generator) -> Mlp:
    return Mlp((obs_dim, *hidden, n_actions), rng, out_gain=0.01)


def value_net(obs_dim: int, hidden: Sequence[int], rng: np.random.Generator) -> Mlp:
    return Mlp((obs_dim, *hidden, 1), rng, out_gain=1.0)


# ----------------------------
# Masked distributions
# ----------------------------
def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
    if not mask.any(axis=-1).all():
        raise MaskError("every action is masked out")
    z = np.where(mask, logits, -np.inf)
    m = z.max(axis=-1, keepdims=True)
    log_z = m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True))
    return np.where(mask, logits - log_z, -np.inf)


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.exp(masked_log_softmax(logits, mask))


def entropy(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, probs * np.log(probs), 0.0)
    return -terms.sum(axis=-1)


def forward_policy(net: Mlp, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return masked_softmax(net(x), mask)


def kl_divergence(p_old: np.ndarray, p_new: np.ndarray) -> float:
    """Mean over rows of KL(old || new), summed over the support of `p_old`."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p_old > 0, p_old * (np.log(p_old) - np.log(p_new)), 0.0)
    return float(terms.sum(axis=-1).mean())


# ----------------------------
# Rollouts and advantages
# ----------------------------
@dataclass
class RolloutBuffer:
    obs: list[np.ndarray] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    log_probs: list[float] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    dones: list[bool] = field(default_factory=list)
    masks: list[np.ndarray] = field(default_factory=list)

    def add(self, obs, action, log_prob, reward, value, done, mask) -> None:
        self.obs.append(np.asarray(obs, dtype=np.float64))
        self.actions.append(int(action))
        self.log_probs.append(float(log_prob))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.dones.append(bool(done))
        self.masks.append(np.asarray(mask, dtype=bool))

    def __len__(self) -> int:
        return len(self.actions)


def compute_advantages(
    rewards: Sequence[float], values: Sequence[float], dones: Sequence[bool], last_value: float, gamma: float
) -> tuple[np.ndarray, np.ndarray]:
    """One-step TD: A_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t); returns = A + V."""
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    nxt = np.append(v[1:], last_value)
    adv = r + gamma * nxt * (1.0 - d) - v
    return adv, adv + v


@dataclass(frozen=True)
class Batch:
    x: np.ndarray
    actions: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    masks: np.ndarray

    def take(self, idx: np.ndarray) -> "Batch":
        return Batch(self.x[idx], self.actions[idx], self.advantages[idx], self.returns[idx], self.masks[idx])


@dataclass(frozen=True)
class LossStats:
    loss: float
    policy_objective: float
    value_loss: float
    entropy: float


def total_loss(
    batch: Batch, policy: Mlp, value: Mlp, beta1: float, beta2: float
) -> tuple[LossStats, list[np.ndarray], list[np.ndarray]]:
    """Loss -(J_pi - beta1 * J_V + beta2 * H) and its gradients for both networks."""
    B = len(batch.actions)
    if B == 0:
        raise TrainingError("empty batch")
    logits, p_acts = policy.forward(batch.x)
    logp = masked_log_softmax(logits, batch.masks)
    probs = np.exp(logp)
    rows = np.arange(B)
    logp_a = logp[rows, batch.actions]
    if not np.isfinite(logp_a).all():
        raise TrainingError("action outside the admissible mask")
    j_pi = float(np.mean(logp_a * batch.advantages))
    h_rows = entropy(probs)
    h = float(h_rows.mean())

    v_out, v_acts = value.forward(batch.x)
    v = v_out[:, 0]
    td = batch.returns - v
    j_v = float(np.mean(td * td))

    loss = -(j_pi - beta1 * j_v + beta2 * h)
    if not math.isfinite(loss):
        raise TrainingError("non-finite loss", {"j_pi": j_pi, "j_v": j_v, "entropy": h})

    onehot = np.zeros_like(probs)
    onehot[rows, batch.actions] = 1.0
    safe_logp = np.where(probs > 0, logp, 0.0)
    d_logits = (
        -batch.advantages[:, None] * (onehot - probs)
        + beta2 * probs * (safe_logp + h_rows[:, None])
    ) / B
    d_v = (beta1 * -2.0 * td / B)[:, None]
    return LossStats(loss, j_pi, j_v, h), policy.backward(p_acts, d_logits), value.backward(v_acts, d_v)


# ----------------------------
# Optimiser and update
# ----------------------------
class MomentumSgd:
    def __init__(self, params: list[np.ndarray], lr: float, momentum: float):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.momentum
            v += g
            p -= self.lr * v

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params] + [v.copy() for v in self.velocity]

    def restore(self, snap: list[np.ndarray]) -> None:
        for dst, src in zip(self.params + self.velocity, snap):
            dst[...] = src


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads:
            g *= scale
    return norm


@dataclass(frozen=True)
class UpdateStats:
    loss: float
    policy_objective: float
    value_loss: float
    entropy: float
    kl: float
    lr: float
    accepted_epochs: int
    rollbacks: int
    grad_norm: float


def update(
    policy: Mlp,
    value: Mlp,
    batch: Batch,
    cfg: TrainConfig,
    rng: np.random.Generator,
    optimizer: MomentumSgd | None = None,
) -> UpdateStats:
    """Minibatch epochs over one rollout with the measured-KL accept/rollback rule.

    Networks are updated in place. The halved step size holds for the rest of this update.
    """
    optimizer = optimizer or MomentumSgd(policy.params() + value.params(), cfg.lr, cfg.momentum)
    optimizer.lr = cfg.lr
    p_old = masked_softmax(policy(batch.x), batch.masks)
    n = len(batch.actions)
    accepted = rollbacks = 0
    kl = 0.0
    stats = None
    grad_norm = 0.0
    while accepted < cfg.epochs:
        snap = optimizer.snapshot()
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            mb = batch.take(order[start:start + cfg.minibatch])
            stats, g_pi, g_v = total_loss(mb, policy, value, cfg.beta1, cfg.beta2)
            grads = g_pi + g_v
            grad_norm = clip_by_global_norm(grads, cfg.max_grad_norm)
            optimizer.step(grads)
        p_new = masked_softmax(policy(batch.x), batch.masks)
        epoch_kl = kl_divergence(p_old, p_new)
        if not math.isfinite(epoch_kl) or epoch_kl > cfg.kl_target:
            optimizer.restore(snap)
            rollbacks += 1
            optimizer.lr *= 0.5
            LOG.debug("epoch rolled back: kl=%.4g, lr -> %.3g", epoch_kl, optimizer.lr)
            if rollbacks > cfg.max_rollbacks:
                raise TrainingError(
                    "trust-region rollbacks exhausted",
                    {"kl": epoch_kl, "lr": optimizer.lr, "rollbacks": rollbacks, "accepted_epochs": accepted},
                )
            continue
        kl = epoch_kl
        accepted += 1
    return UpdateStats(
        stats.loss, stats.policy_objective, stats.value_loss, stats.entropy, kl,
        optimizer.lr, accepted, rollbacks, grad_norm,
    )


# ----------------------------
# Checkpoints
# ----------------------------
def save_checkpoint(
    path: str | Path, policy: Mlp, value: Mlp, config_hash: str, rng_state: dict[str, Any], meta: dict[str, Any]
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f"policy_{k}": p for k, p in enumerate(policy.params())}
    arrays |= {f"value_{k}": p for k, p in enumerate(value.params())}
    header = {
        "schema_version": CHECKPOINT_SCHEMA,
        "config_hash": config_hash,
        "policy_sizes": list(policy.sizes),
        "value_sizes": list(value.sizes),
        "rng_state": rng_state,
        **meta,
    }
    with path.open("wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, default=str)), **arrays)
    return path


def load_checkpoint(path: str | Path) -> tuple[Mlp, Mlp, dict[str, Any]]:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("schema_version") != CHECKPOINT_SCHEMA:
            raise ConfigError(f"unsupported checkpoint schema {header.get('schema_version')}", "checkpoint")
        rng = np.random.default_rng(0)
        policy = Mlp(header["policy_sizes"], rng)
        value = Mlp(header["value_sizes"], rng)
        for k, p in enumerate(policy.params()):
            p[...] = data[f"policy_{k}"]
        for k, p in enumerate(value.params()):
            p[...] = data[f"value_{k}"]
    return policy, value, header


def stats_row(update_index: int, timesteps: int, stats: UpdateStats, episode_returns: Sequence[float]) -> dict:
    row = {"update": update_index, "timesteps": timesteps}
    row |= asdict(stats)
    row["episodes"] = len(episode_returns)
    row["mean_return"] = float(np.mean(episode_returns)) if episode_returns else float("nan")
    return row
