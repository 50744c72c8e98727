"""Trajectory forecasting displacement metrics."""
from __future__ import annotations

from typing import Iterable

import numpy as np


def ade_metrics(pairs: Iterable[tuple[np.ndarray, np.ndarray]]) -> tuple[float, float]:
    """(minADE, meanADE) over (modes (K, H, 2), ground truth (H, 2)) pairs.

    Each pair is one actor in one frame; both numbers average over all pairs.
    Returns (nan, nan) when there are no pairs.
    """
    from ..adversary.objective import ade

    mins, means = [], []
    for modes, gt in pairs:
        per_mode = ade(np.asarray(modes, float), np.asarray(gt, float))
        mins.append(per_mode.min())
        means.append(per_mode.mean())
    if not mins:
        return float("nan"), float("nan")
    return float(np.mean(mins)), float(np.mean(means))
