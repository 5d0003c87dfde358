"""
Experience collection: interaction and reach segments, meta-level batches,
flat base-agent rollouts, and whole evaluation episodes
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from ..env.gridworld import KixEnv, locate_object
from ..env.objects import Action, Layout
from ..errors import ConfigError, NoCandidatesError
from ..knowledge.graphs import build_instance_graph, map_to_type_graph
from ..knowledge.recommender import InteractionGoal, candidate_distribution, recommend
from ..numeric.distributions import categorical_greedy, categorical_sample
from ..policies.nets import META_ACTIONS, InteractionPolicyNet
from ..policies.repository import VARIANTS, PolicyRepository
from .ppo import Trajectory

logger = logging.getLogger(__name__)

META_SUCCESS_REWARD = 0.1
# stream ids for SeedSequence([root, episode, stream])
WORLD_STREAM = 0
ACTION_STREAM = 1


@dataclass
class VariantConfig:
    """Collection settings of one training run"""

    variant: str = "KIX1"
    meta_batch_size: int = 128
    interaction_budget: int = 64
    reach_budget: int = 64
    fallback_budget: int = 16
    base_rollout_steps: int = 512
    total_steps: int = 200000
    workers: int = 1
    eval_every: int = 10
    eval_episodes: int = 20
    checkpoint_every: int = 10
    gamma_meta: float = 0.99
    gamma_interaction: float = 0.99
    value_temperature: float = 1.0

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError("variant", f"must be one of {', '.join(VARIANTS)}, got {self.variant}")
        for key in ("meta_batch_size", "interaction_budget", "reach_budget", "fallback_budget",
                    "base_rollout_steps", "workers", "eval_every", "checkpoint_every"):
            if getattr(self, key) < 1:
                raise ConfigError(key, f"must be at least 1, got {getattr(self, key)}")
        if self.total_steps < 0:
            raise ConfigError("total_steps", "must be non-negative")
        if self.value_temperature <= 0:
            raise ConfigError("value_temperature", "must be positive")


@dataclass
class InteractionResult:
    goal: InteractionGoal
    success: bool
    steps: int
    env_reward: float
    env_done: bool
    env_success: bool = False
    reached: bool = True


def episode_seed(root_seed: int, episode: int, stream: int = WORLD_STREAM) -> np.random.SeedSequence:
    """Counter-based seed of one episode, independent of which worker runs it"""
    return np.random.SeedSequence([int(root_seed), int(episode), int(stream)])


def choose_action(probs: np.ndarray, mode: str, rng: np.random.Generator) -> Tuple[int, float]:
    if mode == "greedy":
        return categorical_greedy(probs)
    return categorical_sample(probs, rng)


def _capped(budget: int, steps_left: Optional[int]) -> int:
    return budget if steps_left is None else max(0, min(budget, steps_left))


class GoalTracker:
    """
    Success predicate of an interaction goal, fed the world after every step

    pickup: target in the inventory. drop: target left the inventory for the
    grid. reveal: target box is gone. open: target door became open after
    being shut. open_with_key: target door became open after being locked.
    """

    def __init__(self, world, goal: InteractionGoal):
        self.goal = goal
        located = locate_object(world, goal.target)
        self.stale = located is None
        self.was_carried = located is not None and located.where == "inventory"
        self.was_shut = located is not None and located.obj.kind == "door" and located.obj.state != "open"
        self.was_locked = located is not None and located.obj.kind == "door" and located.obj.state == "locked"
        self.is_box = located is not None and located.obj.kind == "box"

    def update(self, world) -> bool:
        located = locate_object(world, self.goal.target)
        kind = self.goal.interaction
        if kind == "reveal":
            return self.is_box and located is None
        if located is None:
            return False
        if kind == "pickup":
            return located.where == "inventory"
        if kind == "drop":
            done = self.was_carried and located.where == "grid"
            self.was_carried = self.was_carried or located.where == "inventory"
            return done
        if located.obj.kind != "door":
            return False
        state = located.obj.state
        if kind == "open":
            done = self.was_shut and state == "open"
            self.was_shut = self.was_shut or state != "open"
            return done
        if kind == "open_with_key":
            done = self.was_locked and state == "open"
            self.was_locked = self.was_locked or state == "locked"
            return done
        raise ValueError(f"unknown interaction {kind}")


def target_faced(world, target: int) -> bool:
    """Reach predicate: the agent faces the target's cell, or already carries it"""
    located = locate_object(world, target)
    if located is None:
        return False
    if located.where == "inventory":
        return True
    return located.pos == world.front_pos


def _low_level_segment(env: KixEnv, target: int, policy: InteractionPolicyNet, budget: int,
                       rng: np.random.Generator, mode: str, traj: Trajectory, predicate) -> Tuple[bool, int, float]:
    steps, env_reward, success = 0, 0.0, False
    while steps < budget and not env.done:
        obs = env.observation.to_tensor(target)
        probs, values = policy.predict(obs)
        action, log_prob = choose_action(probs[0], mode, rng)
        result = env.step(action)
        steps += 1
        env_reward += result.reward
        success = predicate()
        traj.append(obs, action, log_prob, float(values[0]), 1.0 if success else 0.0, success or result.done)
        if success:
            break
    if traj.actions and not traj.segment_ends[-1]:
        _, next_values = policy.predict(env.observation.to_tensor(target))
        traj.cut(float(next_values[0]))
    return success, steps, env_reward


def run_interaction_segment(env: KixEnv, goal: InteractionGoal, policy: InteractionPolicyNet, budget: int,
                            rng: np.random.Generator, mode: str = "sample",
                            gamma: float = 0.99) -> Tuple[InteractionResult, Trajectory]:
    """
    Step the environment with the goal's interaction policy until the goal's
    predicate holds, the budget runs out or the episode ends; reward 1 on the
    success step
    """
    traj = Trajectory("interaction", gamma)
    tracker = GoalTracker(env.world, goal)
    if tracker.stale:
        logger.warning(f"Goal {goal} refers to an object that no longer exists")
        return InteractionResult(goal, False, 0, 0.0, env.done), traj
    success, steps, env_reward = _low_level_segment(
        env, goal.target, policy, budget, rng, mode, traj, lambda: tracker.update(env.world))
    result = InteractionResult(goal, success, steps, env_reward, env.done, env.world.success and env.done)
    return result, traj


def run_reach_then_interact(env: KixEnv, goal: InteractionGoal, reach_policy: InteractionPolicyNet,
                            interaction_policy: InteractionPolicyNet, reach_budget: int, interaction_budget: int,
                            rng: np.random.Generator, mode: str = "sample", gamma: float = 0.99,
                            steps_left: Optional[int] = None
                            ) -> Tuple[InteractionResult, Trajectory, Optional[Trajectory]]:
    """
    Reach the target first; the interaction segment only runs after a
    successful reach. Both segments together spend at most ``steps_left``.
    """
    reach_traj = Trajectory("reach", gamma)
    if locate_object(env.world, goal.target) is None:
        logger.warning(f"Goal {goal} refers to an object that no longer exists")
        return InteractionResult(goal, False, 0, 0.0, env.done, reached=False), reach_traj, None

    reached, reach_steps, reach_reward = True, 0, 0.0
    if not target_faced(env.world, goal.target):
        reached, reach_steps, reach_reward = _low_level_segment(
            env, goal.target, reach_policy, _capped(reach_budget, steps_left), rng, mode, reach_traj,
            lambda: target_faced(env.world, goal.target))
    if steps_left is not None:
        steps_left -= reach_steps
    if not reached or env.done or steps_left == 0:
        result = InteractionResult(goal, False, reach_steps, reach_reward, env.done,
                                   env.world.success and env.done, reached=reached)
        return result, reach_traj, None

    result, traj = run_interaction_segment(env, goal, interaction_policy, _capped(interaction_budget, steps_left),
                                           rng, mode, gamma)
    result.steps += reach_steps
    result.env_reward += reach_reward
    return result, reach_traj, traj


def run_fallback(env: KixEnv, budget: int, rng: np.random.Generator) -> Tuple[int, float]:
    """Uniform random low-level actions while nothing is in view"""
    steps, reward = 0, 0.0
    while steps < budget and not env.done:
        reward += env.step(int(rng.integers(len(Action)))).reward
        steps += 1
    return steps, reward


def meta_reward(result: InteractionResult) -> float:
    reward = META_SUCCESS_REWARD if result.success else 0.0
    if result.env_success:
        reward += 1.0 + result.env_reward
    return reward


@dataclass
class WorkerStats:
    env_steps: int = 0
    fallback_steps: int = 0
    segments: int = 0
    segment_successes: int = 0
    episode_returns: List[float] = field(default_factory=list)
    episode_successes: List[bool] = field(default_factory=list)

    def merge(self, other: "WorkerStats"):
        self.env_steps += other.env_steps
        self.fallback_steps += other.fallback_steps
        self.segments += other.segments
        self.segment_successes += other.segment_successes
        self.episode_returns.extend(other.episode_returns)
        self.episode_successes.extend(other.episode_successes)


@dataclass
class WorkerState:
    """
    Environment and RNG streams owned by one worker; episode ``k`` of worker
    ``w`` is global episode ``w + k * num_workers``
    """

    worker_id: int
    num_workers: int
    root_seed: int
    task_id: int
    layout: Layout
    episodes_started: int = 0
    episode_index: int = -1
    env: Optional[KixEnv] = None
    rng: Optional[np.random.Generator] = None

    def next_episode(self):
        self.episode_index = self.worker_id + self.episodes_started * self.num_workers
        self.episodes_started += 1
        self.env = KixEnv(self.layout, self.task_id)
        self.env.reset(episode_seed(self.root_seed, self.episode_index))
        self.rng = np.random.default_rng(episode_seed(self.root_seed, self.episode_index, ACTION_STREAM))

    def ensure_episode(self, stats: WorkerStats):
        if self.env is not None and not self.env.done:
            return
        if self.env is not None:
            stats.episode_returns.append(self.env.episode_return)
            stats.episode_successes.append(self.env.world.success)
        self.next_episode()


@dataclass
class WorkerOutput:
    state: WorkerState
    meta: Trajectory
    interactions: Dict[str, Trajectory]
    reach: Trajectory
    base: Trajectory
    stats: WorkerStats


def _meta_state_value(env: KixEnv, repo: PolicyRepository, temperature: float) -> float:
    """Expected activated-graph value under the candidate distribution; 0 with nothing in view"""
    gi = build_instance_graph(env.observation, env.world.carrying)
    gk = map_to_type_graph(gi)
    try:
        rec = recommend(gi, gk, repo.meta, "greedy", np.random.default_rng(0), temperature)
    except NoCandidatesError:
        return 0.0
    return float(candidate_distribution(rec.values, temperature) @ rec.values)


def _empty_output(state: WorkerState, config: VariantConfig) -> WorkerOutput:
    return WorkerOutput(
        state=state,
        meta=Trajectory("meta", config.gamma_meta),
        interactions={name: Trajectory("interaction", config.gamma_interaction) for name in META_ACTIONS},
        reach=Trajectory("reach", config.gamma_interaction),
        base=Trajectory("base", config.gamma_interaction),
        stats=WorkerStats(),
    )


def run_proposal(env: KixEnv, repo: PolicyRepository, config: VariantConfig, rng: np.random.Generator,
                 mode: str, out: WorkerOutput, steps_left: Optional[int] = None) -> bool:
    """
    One meta step: recommend, run the segment, record experience into ``out``.
    Returns False when nothing was proposable and the fallback ran instead.
    Low-level steps never exceed ``steps_left`` when it is given.
    """
    gi = build_instance_graph(env.observation, env.world.carrying)
    gk = map_to_type_graph(gi)
    try:
        rec = recommend(gi, gk, repo.meta, mode, rng, config.value_temperature)
    except NoCandidatesError:
        steps, _ = run_fallback(env, _capped(config.fallback_budget, steps_left), rng)
        out.stats.env_steps += steps
        out.stats.fallback_steps += steps
        if env.done:
            out.meta.terminate()
        logger.debug(f"Fallback exploration for {steps} steps")
        return False

    interaction_net = repo.interaction(rec.interaction)
    if config.variant == "KIX2":
        result, reach_traj, traj = run_reach_then_interact(
            env, rec.goal, repo.reach, interaction_net, config.reach_budget, config.interaction_budget,
            rng, mode, config.gamma_interaction, steps_left)
        out.reach.extend(reach_traj)
    else:
        result, traj = run_interaction_segment(
            env, rec.goal, interaction_net, _capped(config.interaction_budget, steps_left), rng, mode,
            config.gamma_interaction)
    if traj is not None:
        out.interactions[rec.interaction].extend(traj)

    out.meta.append(rec.encoding, rec.action, rec.log_prob, rec.value, meta_reward(result), env.done)
    out.stats.env_steps += result.steps
    out.stats.segments += 1
    out.stats.segment_successes += int(result.success)
    return True


def collect_worker(state: WorkerState, repo: PolicyRepository, quota: int, config: VariantConfig,
                   step_allowance: Optional[int] = None) -> WorkerOutput:
    """
    Collect ``quota`` meta records (or base steps) on one worker, stopping
    early once ``step_allowance`` environment steps are spent
    """
    out = _empty_output(state, config)

    def steps_left() -> Optional[int]:
        return None if step_allowance is None else step_allowance - out.stats.env_steps

    if config.variant == "BASE":
        quota = _capped(quota, step_allowance)
        while len(out.base) < quota:
            state.ensure_episode(out.stats)
            _base_step(state.env, repo, state.rng, "sample", out.base)
            out.stats.env_steps += 1
        if out.base.actions and not out.base.segment_ends[-1]:
            _, values = repo.base.predict(state.env.observation.to_tensor(with_activation=False))
            out.base.cut(float(values[0]))
        return out

    while len(out.meta) < quota and steps_left() != 0:
        if state.env is None or state.env.done:
            out.meta.cut(0.0)
            state.ensure_episode(out.stats)
        run_proposal(state.env, repo, config, state.rng, "sample", out, steps_left())
    if state.env is not None and not state.env.done:
        out.meta.cut(_meta_state_value(state.env, repo, config.value_temperature))
    return out


def _base_step(env: KixEnv, repo: PolicyRepository, rng: np.random.Generator, mode: str,
               traj: Optional[Trajectory]):
    obs = env.observation.to_tensor(with_activation=False)
    probs, values = repo.base.predict(obs)
    action, log_prob = choose_action(probs[0], mode, rng)
    result = env.step(action)
    if traj is not None:
        traj.append(obs, action, log_prob, float(values[0]), result.reward, result.done)


def _quotas(total: int, workers: int) -> List[int]:
    return [total // workers + (1 if w < total % workers else 0) for w in range(workers)]


def collect_meta_batch(states: List[WorkerState], repo: PolicyRepository, config: VariantConfig,
                       step_budget: Optional[int] = None) -> Tuple[List[WorkerState], WorkerOutput]:
    """
    Run every worker on the same frozen repository snapshot and merge their
    records in worker order; BASE collects ``base_rollout_steps`` flat steps.
    With ``step_budget`` the batch spends at most that many environment steps,
    split across workers like the record quotas.
    """
    total = config.base_rollout_steps if config.variant == "BASE" else config.meta_batch_size
    quotas = _quotas(total, len(states))
    allowances = [None] * len(states) if step_budget is None else _quotas(step_budget, len(states))
    snapshot = repo.snapshot()
    outputs = Parallel(n_jobs=len(states))(
        delayed(collect_worker)(state, snapshot, quota, config, allowance)
        for state, quota, allowance in zip(states, quotas, allowances))

    merged = _empty_output(None, config)
    for output in outputs:
        merged.meta.extend(output.meta)
        merged.reach.extend(output.reach)
        merged.base.extend(output.base)
        for name in META_ACTIONS:
            merged.interactions[name].extend(output.interactions[name])
        merged.stats.merge(output.stats)
    logger.debug(f"Collected {len(merged.meta)} meta records, {len(merged.base)} base steps, "
                 f"{merged.stats.env_steps} env steps on {len(states)} workers")
    return [o.state for o in outputs], merged


@dataclass
class EpisodeOutcome:
    env_return: float
    success: bool
    steps: int
    visits: np.ndarray


def run_episode(repo: PolicyRepository, layout: Layout, task_id: int, root_seed: int, episode: int,
                config: VariantConfig, mode: str = "greedy") -> EpisodeOutcome:
    """Play one whole episode; the world and action streams depend only on (root_seed, episode)"""
    env = KixEnv(layout, task_id)
    env.reset(episode_seed(root_seed, episode))
    rng = np.random.default_rng(episode_seed(root_seed, episode, ACTION_STREAM))
    while not env.done:
        if repo.variant == "BASE":
            _base_step(env, repo, rng, mode, None)
        else:
            run_proposal(env, repo, config, rng, mode, _empty_output(None, config))
    return EpisodeOutcome(env.episode_return, env.world.success, env.world.step_count, env.visits.copy())
