"""
Vector-graphic bar charts for report tables
"""

import logging
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

# fixed element ids so repeated renders of the same table are identical
plt.rcParams["svg.hashsalt"] = "kix-report"


def grouped_bar_svg(path: str, groups: Sequence[str], series: Sequence[str], values: np.ndarray,
                    title: str, ylabel: str) -> str:
    """
    Write a grouped bar chart as SVG

    Args:
        groups: x-axis categories (one cluster of bars each)
        series: one bar per series inside every cluster
        values: (len(series), len(groups)); NaN bars are left out
    """
    values = np.asarray(values, dtype=np.float64).reshape(len(series), len(groups))
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(groups) + 2.0), 3.5))
    x = np.arange(len(groups))
    width = 0.8 / max(len(series), 1)
    for i, name in enumerate(series):
        row = values[i]
        mask = ~np.isnan(row)
        ax.bar(x[mask] + (i - (len(series) - 1) / 2) * width, row[mask], width, label=name)
    ax.set_xticks(x)
    ax.set_xticklabels(list(groups))
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    if len(series):
        ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug(f"Chart written to {path}")
    return path
