"""
Evaluation episode logs and the rollouts that produce them
"""

import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..env.gridworld import TASK_IDS
from ..errors import ConfigError, MetricError
from ..learning.rollout import run_episode
from ..learning.trainer import load_checkpoint

logger = logging.getLogger(__name__)

BASE_COLUMNS = ["episode", "task", "seed", "return", "success", "steps", "rooms_x", "rooms_y"]


@dataclass
class EpisodeRecord:
    episode: int
    env_return: float
    success: bool
    steps: int
    visits: np.ndarray


@dataclass
class EpisodeLog:
    """Per-episode outcomes of one (variant, task, seed) evaluation"""

    variant: str
    task_id: int
    seed: int
    rooms_x: int
    rooms_y: int
    records: List[EpisodeRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def num_rooms(self) -> int:
        return self.rooms_x * self.rooms_y

    def returns(self) -> np.ndarray:
        return np.array([r.env_return for r in self.records], dtype=np.float64)

    def successes(self) -> np.ndarray:
        return np.array([r.success for r in self.records], dtype=bool)

    def visit_counts(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, self.num_rooms), dtype=np.int64)
        return np.stack([np.asarray(r.visits, dtype=np.int64) for r in self.records])

    def validate(self):
        returns = self.returns()
        if np.any(returns < 0) or np.any(returns > 1):
            raise MetricError(f"episode returns outside [0, 1] in {self.file_stem()}")
        for r in self.records:
            if len(r.visits) != self.num_rooms:
                raise MetricError(f"episode {r.episode} has {len(r.visits)} room counts, expected {self.num_rooms}")

    def file_stem(self) -> str:
        return f"episodes_{self.variant}_task{self.task_id}_seed{self.seed}"

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for r in self.records:
            row = {"episode": r.episode, "task": self.task_id, "seed": self.seed, "return": r.env_return,
                   "success": bool(r.success), "steps": r.steps, "rooms_x": self.rooms_x, "rooms_y": self.rooms_y}
            row.update({f"visits_{i}": int(v) for i, v in enumerate(r.visits)})
            rows.append(row)
        columns = BASE_COLUMNS + [f"visits_{i}" for i in range(self.num_rooms)]
        return pd.DataFrame(rows, columns=columns)

    def save(self, directory: str) -> str:
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, f"{self.file_stem()}.csv")
        self.to_frame().to_csv(path, index=False)
        logger.info(f"Episode log with {len(self)} episodes saved to {path}")
        return path

    @classmethod
    def load(cls, path: str, variant: str) -> "EpisodeLog":
        frame = pd.read_csv(path)
        if frame.empty:
            raise MetricError(f"episode log {path} is empty")
        first = frame.iloc[0]
        log = cls(variant, int(first["task"]), int(first["seed"]), int(first["rooms_x"]), int(first["rooms_y"]))
        visit_cols = [f"visits_{i}" for i in range(log.num_rooms)]
        for _, row in frame.iterrows():
            log.records.append(EpisodeRecord(int(row["episode"]), float(row["return"]), bool(row["success"]),
                                             int(row["steps"]), row[visit_cols].to_numpy(dtype=np.int64)))
        return log


def rollout_eval(checkpoint: str, task_id: int, episodes: int, seed: int, mode: str = "greedy",
                 workers: int = 1, variant: Optional[str] = None) -> EpisodeLog:
    """
    Run a trained repository for ``episodes`` episodes on ``task_id``;
    episode ``i`` only depends on (seed, i)
    """
    if task_id not in TASK_IDS:
        raise ConfigError("task", f"must be one of {TASK_IDS}, got {task_id}")
    if mode not in ("greedy", "sample"):
        raise ConfigError("eval_mode", f"must be greedy or sample, got {mode}")
    repo, variant_config, _, _, layout, _ = load_checkpoint(checkpoint, variant)

    outcomes = Parallel(n_jobs=workers)(
        delayed(run_episode)(repo, layout, task_id, seed, i, variant_config, mode) for i in range(episodes))
    log = EpisodeLog(repo.variant, task_id, seed, layout.rooms_x, layout.rooms_y)
    for i, o in enumerate(outcomes):
        log.records.append(EpisodeRecord(i, float(o.env_return), bool(o.success), int(o.steps), o.visits))
    log.validate()
    logger.info(f"Evaluated {repo.variant} on task {task_id}: {len(log)} episodes, "
                f"success rate {log.successes().mean() if len(log) else 0.0:.3f}")
    return log
