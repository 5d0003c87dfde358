"""
One-step advantages, clipped PPO losses and the update shared by every level
"""

import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..errors import ConfigError, NumericError, PpoUpdateError
from ..numeric.distributions import categorical_entropy, entropy_of
from ..numeric.graph import GraphBatch, collate
from ..numeric.optim import adam_step, backward_gradients, clip_grad_norm
from ..numeric.tensor import Tensor, as_tensor, clip, exp, minimum, square
from ..policies.nets import ActorCritic

logger = logging.getLogger(__name__)

LEVELS = ("meta", "interaction", "reach", "base")
ADVANTAGE_STD_FLOOR = 1e-8


@dataclass
class PpoConfig:
    clip_eps: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    lr: float = 2.5e-4
    epochs: int = 4
    minibatch_size: int = 64
    gamma: float = 0.99
    max_grad_norm: float = 0.5
    normalize_advantages: bool = True

    def validate(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ConfigError("clip_eps", f"must lie in (0, 1), got {self.clip_eps}")
        for key in ("entropy_coef", "value_coef", "lr", "max_grad_norm"):
            if getattr(self, key) < 0:
                raise ConfigError(key, f"must be non-negative, got {getattr(self, key)}")
        if self.epochs < 1 or self.minibatch_size < 1:
            raise ConfigError("epochs" if self.epochs < 1 else "minibatch_size", "must be at least 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma", f"must lie in [0, 1], got {self.gamma}")


@dataclass
class Trajectory:
    """
    Ordered experience records of one level

    Records are grouped into segments. Inside a segment the successor value
    of a record is the next record's value; the last record of a segment
    gets the bootstrap value passed to ``cut`` (ignored when it is done).
    """

    level: str
    gamma: float = 0.99
    states: List[Any] = field(default_factory=list)
    actions: List[int] = field(default_factory=list)
    log_probs: List[float] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    dones: List[bool] = field(default_factory=list)
    next_values: List[float] = field(default_factory=list)
    segment_ends: List[bool] = field(default_factory=list)

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"unknown trajectory level {self.level}")

    def __len__(self) -> int:
        return len(self.actions)

    def append(self, state, action: int, log_prob: float, value: float, reward: float, done: bool):
        if log_prob > 0:
            raise NumericError(f"log-probability {log_prob} is positive")
        if self.actions and not self.segment_ends[-1]:
            self.next_values[-1] = float(value)
        self.states.append(state)
        self.actions.append(int(action))
        self.log_probs.append(float(log_prob))
        self.values.append(float(value))
        self.rewards.append(float(reward))
        self.dones.append(bool(done))
        self.next_values.append(0.0)
        self.segment_ends.append(bool(done))

    def cut(self, bootstrap_value: float = 0.0):
        """Close the open segment, bootstrapping from ``bootstrap_value``"""
        if not self.actions or self.segment_ends[-1]:
            return
        self.next_values[-1] = float(bootstrap_value)
        self.segment_ends[-1] = True

    def terminate(self):
        """Mark the last record of the open segment as the end of its episode"""
        if not self.actions or self.segment_ends[-1]:
            return
        self.dones[-1] = True
        self.cut(0.0)

    def extend(self, other: "Trajectory"):
        if other.level != self.level:
            raise ValueError(f"cannot merge {other.level} records into a {self.level} trajectory")
        for traj in (self, other):
            if traj.actions and not traj.segment_ends[-1]:
                raise ValueError(f"cannot merge a {traj.level} trajectory with an open segment")
        for name in ("states", "actions", "log_probs", "values", "rewards", "dones", "next_values", "segment_ends"):
            getattr(self, name).extend(getattr(other, name))

    @classmethod
    def from_arrays(cls, level: str, rewards: Sequence[float], values: Sequence[float], dones: Sequence[bool],
                    gamma: float = 0.99, bootstrap_value: float = 0.0, actions: Optional[Sequence[int]] = None,
                    log_probs: Optional[Sequence[float]] = None, states: Optional[Sequence[Any]] = None) -> "Trajectory":
        """Single open segment built from aligned sequences, then cut"""
        n = len(rewards)
        traj = cls(level, gamma)
        actions = actions if actions is not None else [0] * n
        log_probs = log_probs if log_probs is not None else [0.0] * n
        states = states if states is not None else [None] * n
        for i in range(n):
            traj.append(states[i], actions[i], log_probs[i], values[i], rewards[i], dones[i])
        traj.cut(bootstrap_value)
        return traj

    def arrays(self):
        return (np.asarray(self.rewards, dtype=np.float64), np.asarray(self.values, dtype=np.float64),
                np.asarray(self.dones, dtype=bool), np.asarray(self.next_values, dtype=np.float64))


def _require_records(traj: Trajectory):
    if len(traj) == 0:
        raise ValueError(f"{traj.level} trajectory is empty")


def one_step_advantage(traj: Trajectory) -> np.ndarray:
    """A_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t)"""
    _require_records(traj)
    rewards, values, dones, next_values = traj.arrays()
    return rewards + traj.gamma * next_values * (~dones) - values


def discounted_returns(traj: Trajectory) -> np.ndarray:
    """Backward recursion R_t = r_t + gamma R_{t+1} (1 - done_t), bootstrapped at segment cuts"""
    rewards, _, dones, next_values = traj.arrays()
    returns = np.zeros_like(rewards)
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        if traj.segment_ends[t]:
            running = next_values[t]
        running = rewards[t] + traj.gamma * running * (not dones[t])
        returns[t] = running
    return returns


def normalize(advantages: np.ndarray) -> np.ndarray:
    return (advantages - advantages.mean()) / max(float(advantages.std()), ADVANTAGE_STD_FLOOR)


def clipped_actor_loss(new_log_probs: Union[Tensor, np.ndarray], old_log_probs: np.ndarray,
                       advantages: np.ndarray, clip_eps: float) -> Tensor:
    """-mean(min(ratio A, clip(ratio, 1 - eps, 1 + eps) A)) with ratio = exp(new - old)"""
    new_log_probs = as_tensor(new_log_probs)
    ratio = exp(new_log_probs - np.asarray(old_log_probs, dtype=np.float64))
    if not np.all(np.isfinite(ratio.data)):
        raise NumericError("probability ratio is not finite")
    advantages = np.asarray(advantages, dtype=np.float64)
    surrogate = minimum(ratio * advantages, clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages)
    return -surrogate.mean()


def critic_loss(values: Union[Tensor, np.ndarray], returns: np.ndarray) -> Tensor:
    """mean(1/2 (V - R)^2)"""
    return (square(as_tensor(values) - np.asarray(returns, dtype=np.float64)) * 0.5).mean()


def entropy_bonus(distributions: Union[Tensor, np.ndarray]) -> Union[Tensor, float]:
    """
    Mean Shannon entropy; a Tensor is read as logits and stays differentiable,
    an array is read as probability rows
    """
    if isinstance(distributions, Tensor):
        return categorical_entropy(distributions).mean()
    return float(entropy_of(distributions).mean())


def batch_states(level: str, states: Sequence[Any]):
    if level == "meta":
        graphs: List[GraphBatch] = list(states)
        return collate(graphs)
    return np.stack([np.asarray(s, dtype=np.float64) for s in states])


@dataclass
class LossReport:
    update_index: int
    level: str
    key: str
    actor_loss: float
    critic_loss: float
    entropy: float
    grad_norm: float
    records: int

    def to_row(self) -> dict:
        return asdict(self)


def combined_loss(net: ActorCritic, inputs, actions: np.ndarray, old_log_probs: np.ndarray,
                  advantages: np.ndarray, returns: np.ndarray, config: PpoConfig):
    """L_actor - entropy_coef H + value_coef L_critic, plus its parts"""
    log_probs, values, entropy = net.evaluate_actions(inputs, actions)
    actor = clipped_actor_loss(log_probs, old_log_probs, advantages, config.clip_eps)
    critic = critic_loss(values, returns)
    mean_entropy = entropy.mean()
    total = actor - mean_entropy * config.entropy_coef + critic * config.value_coef
    return total, actor, critic, mean_entropy


def ppo_update(net: ActorCritic, traj: Trajectory, config: PpoConfig, rng: np.random.Generator,
               update_index: int = 0, key: str = "") -> LossReport:
    """
    ``epochs`` passes over shuffled minibatches with Adam steps on the combined
    loss; parameters are rolled back if any step produces non-finite values

    Raises:
        PpoUpdateError: the update was aborted and rolled back
    """
    _require_records(traj)
    advantages = one_step_advantage(traj)
    returns = discounted_returns(traj)
    if config.normalize_advantages and len(traj) > 1:
        advantages = normalize(advantages)
    actions = np.asarray(traj.actions, dtype=np.int64)
    old_log_probs = np.asarray(traj.log_probs, dtype=np.float64)

    backup = net.params.snapshot()
    n = len(traj)
    sums = np.zeros(4)
    count = 0
    try:
        for _ in range(config.epochs):
            order = rng.permutation(n)
            for start in range(0, n, config.minibatch_size):
                idx = order[start:start + config.minibatch_size]
                inputs = batch_states(traj.level, [traj.states[i] for i in idx])
                total, actor, critic, entropy = combined_loss(
                    net, inputs, actions[idx], old_log_probs[idx], advantages[idx], returns[idx], config)
                if not np.isfinite(total.item()):
                    raise NumericError(f"{traj.level} loss is not finite")
                grads = backward_gradients(total, net.params)
                grads, norm = clip_grad_norm(grads, config.max_grad_norm)
                adam_step(net.params, grads, config.lr)
                sums += (actor.item(), critic.item(), entropy.item(), norm)
                count += 1
    except NumericError as e:
        net.params.restore(backup)
        logger.warning(f"Rolled back {key or traj.level} update {update_index}: {e}")
        raise PpoUpdateError(f"{key or traj.level} update {update_index} aborted: {e}") from e

    means = sums / max(count, 1)
    report = LossReport(update_index, traj.level, key or traj.level, float(means[0]), float(means[1]),
                        float(means[2]), float(means[3]), n)
    logger.debug(f"Update {update_index} {report.key}: actor {report.actor_loss:.4f} "
                 f"critic {report.critic_loss:.4f} entropy {report.entropy:.4f}")
    return report


def append_loss_reports(path: str, reports: Sequence[LossReport]):
    """Append loss rows to the training CSV, writing the header on first use"""
    if not reports:
        return
    frame = pd.DataFrame([r.to_row() for r in reports])
    exists = os.path.exists(path)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, mode="a", header=not exists, index=False)
