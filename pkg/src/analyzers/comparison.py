import logging
import os
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from ..policies.repository import VARIANTS
from ..utils.excel_generator import ExcelReportGenerator
from ..utils.plots import grouped_bar_svg
from .episodes import EpisodeLog
from .metrics import profile_k, return_profile_summary, top_k_returns, visit_distribution, wasserstein_exact

logger = logging.getLogger(__name__)

LogKey = Tuple[str, int]

PROFILE_COLUMNS = ["variant", "task", "episodes", "k", "mean", "median", "min", "max", "success_rate", "top_k_returns"]
DISTANCE_COLUMNS = ["variant", "task", "reference_task", "distance"]
GAP_COLUMNS = ["task", "KIX1", "KIX2", "kix2_minus_kix1"]
REFERENCE_TASK = 0


def _variant_order(variant: str) -> int:
    return VARIANTS.index(variant) if variant in VARIANTS else len(VARIANTS)


class EpisodeAnalyzer:
    """Compares evaluation logs across variants and tasks"""

    def __init__(self, top_k: int = 100, ground_metric: str = "manhattan"):
        self.top_k = top_k
        self.ground_metric = ground_metric

    def analyze(self, logs: Dict[LogKey, EpisodeLog]) -> Dict[str, pd.DataFrame]:
        """
        Build the report tables

        Args:
            logs: evaluation logs keyed by (variant, task)

        Returns:
            ``return_profiles``, ``distances`` and ``distance_gaps`` frames
        """
        keys = sorted(logs, key=lambda k: (_variant_order(k[0]), k[0], k[1]))
        distances = self._distances(logs, keys)
        return {
            "return_profiles": self._return_profiles(logs, keys),
            "distances": distances,
            "distance_gaps": self._distance_gaps(distances),
        }

    def _return_profiles(self, logs: Dict[LogKey, EpisodeLog], keys: List[LogKey]) -> pd.DataFrame:
        rows = []
        for variant, task in keys:
            log = logs[(variant, task)]
            k = profile_k(self.top_k, len(log))
            best = top_k_returns(log, k)
            row = {"variant": variant, "task": task, "episodes": len(log), "k": len(best)}
            row.update(return_profile_summary(best))
            row["success_rate"] = float(log.successes().mean()) if len(log) else np.nan
            row["top_k_returns"] = " ".join(f"{r:.6f}" for r in best)
            rows.append(row)
        return pd.DataFrame(rows, columns=PROFILE_COLUMNS)

    def _distances(self, logs: Dict[LogKey, EpisodeLog], keys: List[LogKey]) -> pd.DataFrame:
        rows = []
        for variant, task in keys:
            if task == REFERENCE_TASK or (variant, REFERENCE_TASK) not in logs:
                continue
            reference = visit_distribution(logs[(variant, REFERENCE_TASK)])
            other = visit_distribution(logs[(variant, task)])
            rows.append({"variant": variant, "task": task, "reference_task": REFERENCE_TASK,
                         "distance": wasserstein_exact(reference, other, self.ground_metric)})
        return pd.DataFrame(rows, columns=DISTANCE_COLUMNS)

    def _distance_gaps(self, distances: pd.DataFrame) -> pd.DataFrame:
        kix = distances[distances["variant"].isin(["KIX1", "KIX2"])]
        if kix.empty or kix["variant"].nunique() < 2:
            return pd.DataFrame(columns=GAP_COLUMNS)
        table = kix.pivot(index="task", columns="variant", values="distance").dropna().reset_index()
        table["kix2_minus_kix1"] = table["KIX2"] - table["KIX1"]
        return table[GAP_COLUMNS]


def emit_report(logs: Dict[LogKey, EpisodeLog], out_dir: str, top_k: int = 100,
                ground_metric: str = "manhattan", tag: str = "report") -> Dict[str, str]:
    """Write return-profile and distance tables as CSV, SVG charts and one workbook"""
    os.makedirs(out_dir, exist_ok=True)
    tables = EpisodeAnalyzer(top_k, ground_metric).analyze(logs)
    paths: Dict[str, str] = {}

    for name, frame in tables.items():
        path = os.path.join(out_dir, f"{name}_{tag}.csv")
        frame.to_csv(path, index=False)
        paths[f"{name}_csv"] = path

    profiles = tables["return_profiles"]
    tasks = sorted(profiles["task"].unique().tolist())
    variants = sorted(profiles["variant"].unique().tolist(), key=_variant_order)
    grid = np.full((len(variants), len(tasks)), np.nan)
    for _, row in profiles.iterrows():
        grid[variants.index(row["variant"]), tasks.index(row["task"])] = row["mean"]
    paths["return_profiles_svg"] = grouped_bar_svg(
        os.path.join(out_dir, f"return_profiles_{tag}.svg"), [f"task {t}" for t in tasks], variants, grid,
        "Mean top-k return", "return")

    distances = tables["distances"]
    d_tasks = sorted(distances["task"].unique().tolist())
    d_variants = sorted(distances["variant"].unique().tolist(), key=_variant_order)
    d_grid = np.full((len(d_variants), len(d_tasks)), np.nan)
    for _, row in distances.iterrows():
        d_grid[d_variants.index(row["variant"]), d_tasks.index(row["task"])] = row["distance"]
    paths["distances_svg"] = grouped_bar_svg(
        os.path.join(out_dir, f"distances_{tag}.svg"), [f"task {t}" for t in d_tasks], d_variants, d_grid,
        f"Wasserstein distance to task {REFERENCE_TASK} visits", "distance")

    workbook = os.path.join(out_dir, f"report_{tag}.xlsx")
    ExcelReportGenerator(workbook).generate_report(tables)
    paths["workbook"] = workbook
    logger.info(f"Report with {len(profiles)} return profiles and {len(distances)} distances written to {out_dir}")
    return paths
