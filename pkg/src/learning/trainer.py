"""
Training loop: collect a batch on frozen policies, then update every level
"""

import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..env.objects import Layout
from ..errors import CheckpointError, PpoUpdateError
from ..policies.nets import META_ACTIONS
from ..policies.repository import PolicyRepository
from .ppo import LossReport, PpoConfig, append_loss_reports, ppo_update
from .rollout import VariantConfig, WorkerState, collect_meta_batch, run_episode

logger = logging.getLogger(__name__)

LATEST = "latest.ckpt"
LOSSES_CSV = "losses.csv"
PROGRESS_CSV = "progress.csv"
# episode indices at or above this offset are reserved for evaluation snapshots
EVAL_EPISODE_OFFSET = 1 << 30


@dataclass
class TrainingSummary:
    variant: str
    env_steps: int
    updates: int
    checkpoints: List[str] = field(default_factory=list)
    last_eval_success: Optional[float] = None


def save_checkpoint(path: str, repo: PolicyRepository, variant_config: VariantConfig,
                    meta_ppo: PpoConfig, low_ppo: PpoConfig, layout: Layout,
                    extra: Optional[Dict[str, Any]] = None) -> str:
    metadata = {
        "variant_config": asdict(variant_config),
        "meta_ppo": asdict(meta_ppo),
        "low_ppo": asdict(low_ppo),
        "layout": asdict(layout),
    }
    metadata.update(extra or {})
    return repo.save(path, metadata)


def load_checkpoint(path: str, variant: Optional[str] = None
                    ) -> Tuple[PolicyRepository, VariantConfig, PpoConfig, PpoConfig, Layout, Dict[str, Any]]:
    """Restore a repository and the configs it was trained with"""
    repo, metadata = PolicyRepository.load(path, variant)
    try:
        variant_config = VariantConfig(**metadata["variant_config"])
        meta_ppo = PpoConfig(**metadata["meta_ppo"])
        low_ppo = PpoConfig(**metadata["low_ppo"])
        layout = Layout(**metadata["layout"])
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"{path} lacks training configuration: {e}") from e
    return repo, variant_config, meta_ppo, low_ppo, layout, metadata


def evaluate_success(repo: PolicyRepository, layout: Layout, task_id: int, seed: int,
                     config: VariantConfig, episodes: int) -> float:
    """Greedy success rate over a fixed block of evaluation episodes"""
    outcomes = Parallel(n_jobs=config.workers)(
        delayed(run_episode)(repo, layout, task_id, seed, EVAL_EPISODE_OFFSET + i, config, "greedy")
        for i in range(episodes))
    return float(np.mean([o.success for o in outcomes])) if outcomes else 0.0


def _update_all(repo: PolicyRepository, batch, meta_ppo: PpoConfig, low_ppo: PpoConfig,
                rng: np.random.Generator, update: int) -> List[LossReport]:
    reports = []
    if repo.variant == "BASE":
        if len(batch.base):
            reports.append(ppo_update(repo.base, batch.base, low_ppo, rng, update, "base"))
        return reports
    if len(batch.meta):
        reports.append(ppo_update(repo.meta, batch.meta, meta_ppo, rng, update, "meta"))
    for name in META_ACTIONS:
        traj = batch.interactions[name]
        if len(traj):
            reports.append(ppo_update(repo.interaction(name), traj, low_ppo, rng, update, f"interaction.{name}"))
    if repo.variant == "KIX2" and len(batch.reach):
        reports.append(ppo_update(repo.reach, batch.reach, low_ppo, rng, update, "reach"))
    return reports


def train(config: VariantConfig, meta_ppo: PpoConfig, low_ppo: PpoConfig, layout: Layout, seed: int,
          task_id: int, checkpoint_dir: str, log_dir: str) -> TrainingSummary:
    """
    Alternate collection and updates until ``total_steps`` environment steps
    are spent. ``latest.ckpt`` is only replaced after an update succeeds, so a
    numeric failure leaves the last good parameters on disk.
    """
    config.validate()
    meta_ppo.validate()
    low_ppo.validate()
    layout.validate()
    os.makedirs(checkpoint_dir, exist_ok=True)
    os.makedirs(log_dir, exist_ok=True)

    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    repo = PolicyRepository.create(config.variant, rng)
    summary = TrainingSummary(config.variant, 0, 0)

    def checkpoint(name: str):
        path = save_checkpoint(os.path.join(checkpoint_dir, name), repo, config, meta_ppo, low_ppo, layout,
                               {"env_steps": summary.env_steps, "updates": summary.updates,
                                "seed": int(seed), "task": int(task_id)})
        summary.checkpoints.append(path)

    checkpoint("step_0000000000.ckpt")
    checkpoint(LATEST)

    workers = [WorkerState(w, config.workers, int(seed), task_id, layout) for w in range(config.workers)]
    losses_path = os.path.join(log_dir, LOSSES_CSV)
    progress_path = os.path.join(log_dir, PROGRESS_CSV)
    for path in (losses_path, progress_path):
        if os.path.exists(path):
            os.remove(path)

    episodes = 0
    while summary.env_steps < config.total_steps:
        workers, batch = collect_meta_batch(workers, repo, config, config.total_steps - summary.env_steps)
        if batch.stats.env_steps == 0:
            logger.warning(f"Collection spent no environment steps; stopping at {summary.env_steps} steps")
            break
        summary.env_steps += batch.stats.env_steps
        summary.updates += 1
        episodes += len(batch.stats.episode_returns)

        try:
            reports = _update_all(repo, batch, meta_ppo, low_ppo, rng, summary.updates)
        except PpoUpdateError:
            logger.error(f"Update {summary.updates} failed; {LATEST} keeps the last good parameters")
            raise
        append_loss_reports(losses_path, reports)
        if summary.updates % config.checkpoint_every == 0:
            checkpoint(f"step_{summary.env_steps:010d}.ckpt")
        checkpoint(LATEST)

        eval_success = None
        if summary.updates % config.eval_every == 0:
            eval_success = evaluate_success(repo, layout, task_id, seed, config, config.eval_episodes)
            summary.last_eval_success = eval_success

        returns = batch.stats.episode_returns
        row = {
            "update": summary.updates,
            "env_steps": summary.env_steps,
            "episodes": episodes,
            "variant": config.variant,
            "fallback_steps": batch.stats.fallback_steps,
            "segment_success_rate": batch.stats.segment_successes / max(batch.stats.segments, 1),
            "mean_return": float(np.mean(returns)) if returns else np.nan,
            "success_rate": float(np.mean(batch.stats.episode_successes)) if returns else np.nan,
            "eval_success_rate": eval_success if eval_success is not None else np.nan,
        }
        pd.DataFrame([row]).to_csv(progress_path, mode="a", header=not os.path.exists(progress_path), index=False)
        logger.info(f"Update {summary.updates}: {summary.env_steps}/{config.total_steps} steps, "
                    f"{episodes} episodes" + (f", eval success {eval_success:.2f}" if eval_success is not None else ""))

    logger.info(f"Training {config.variant} finished after {summary.env_steps} env steps")
    return summary
