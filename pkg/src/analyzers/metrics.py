"""
Return profiles, room-visit distributions and exact Wasserstein distances
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linprog

from ..errors import MetricError
from .episodes import EpisodeLog

logger = logging.getLogger(__name__)

GROUND_METRICS = ("manhattan", "index", "discrete")
DISTRIBUTION_TOLERANCE = 1e-9


@dataclass
class VisitDistribution:
    """Probability of each room index plus the (x, y) grid coordinates of every room"""

    probs: np.ndarray
    coords: List[Tuple[int, int]]

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (len(self.coords),):
            raise MetricError(f"{self.probs.size} probabilities for {len(self.coords)} rooms")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > DISTRIBUTION_TOLERANCE:
            raise MetricError(f"visit distribution sums to {self.probs.sum()}, not 1")


def room_coords(rooms_x: int, rooms_y: int) -> List[Tuple[int, int]]:
    return [(i % rooms_x, i // rooms_x) for i in range(rooms_x * rooms_y)]


def top_k_returns(log: Union[EpisodeLog, Sequence[float]], k: int) -> List[float]:
    """Highest ``k`` returns, descending, ties kept in episode order"""
    returns = np.asarray(log.returns() if isinstance(log, EpisodeLog) else log, dtype=np.float64)
    order = np.argsort(-returns, kind="stable")
    return [float(r) for r in returns[order[:max(k, 0)]]]


def profile_k(k: int, episodes: int) -> int:
    """Top-k size for a run of ``episodes`` episodes: at most a tenth of them, at least 1"""
    return max(1, min(k, episodes // 10))


def return_profile_summary(returns: Sequence[float]) -> Dict[str, float]:
    if len(returns) == 0:
        return {"mean": np.nan, "median": np.nan, "min": np.nan, "max": np.nan}
    arr = np.asarray(returns, dtype=np.float64)
    return {"mean": float(arr.mean()), "median": float(np.median(arr)),
            "min": float(arr.min()), "max": float(arr.max())}


def visit_distribution(log: EpisodeLog) -> VisitDistribution:
    counts = log.visit_counts().sum(axis=0).astype(np.float64)
    total = counts.sum()
    if total <= 0:
        raise MetricError(f"{log.variant} task {log.task_id} log has no room visits")
    return VisitDistribution(counts / total, room_coords(log.rooms_x, log.rooms_y))


def ground_cost(coords: List[Tuple[int, int]], metric: str = "manhattan") -> np.ndarray:
    """Pairwise room distance matrix under the chosen ground metric"""
    pts = np.asarray(coords, dtype=np.float64)
    if metric == "manhattan":
        return np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=-1)
    idx = np.arange(len(coords), dtype=np.float64)
    if metric == "index":
        return np.abs(idx[:, None] - idx[None, :])
    if metric == "discrete":
        return (idx[:, None] != idx[None, :]).astype(np.float64)
    raise MetricError(f"unknown ground metric {metric}; expected one of {', '.join(GROUND_METRICS)}")


def wasserstein_exact(p: VisitDistribution, q: VisitDistribution, metric: str = "manhattan") -> float:
    """
    1-Wasserstein distance as the transport linear program

    minimise sum C_ij T_ij  s.t.  T 1 = p,  T^T 1 = q,  T >= 0
    solved exactly with HiGHS.
    """
    if list(p.coords) != list(q.coords):
        raise MetricError("visit distributions are defined over different room grids")
    cost = ground_cost(p.coords, metric)
    n = len(p.coords)
    rows = np.kron(np.eye(n), np.ones((1, n)))
    cols = np.kron(np.ones((1, n)), np.eye(n))
    # the last column constraint is implied by the others
    a_eq = np.vstack([rows, cols[:-1]])
    b_eq = np.concatenate([p.probs, q.probs[:-1]])
    res = linprog(cost.reshape(-1), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise MetricError(f"transport problem failed: {res.message}")
    return max(0.0, float(res.fun))
