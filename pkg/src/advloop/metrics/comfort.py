"""Planning and driving comfort: lateral acceleration and jerk."""
from __future__ import annotations

from typing import Sequence

import numpy as np


def comfort_metrics(states, mode: str = "executed", dt: float = 0.1) -> tuple[float, float]:
    """(mean |lat accel|, mean |jerk|).

    ``executed`` takes one (N, 6) state array; ``planned`` takes a sequence of
    per-tick plan state arrays and averages their comfort.
    """
    from ..adversary.objective import comfort_cost

    if mode == "executed":
        jerk, lat = comfort_cost(np.asarray(states, float), dt)
        return lat, jerk
    if mode == "planned":
        plans: Sequence = list(states)
        if not plans:
            raise ValueError("no plans to average")
        vals = np.array([comfort_cost(np.asarray(p, float), dt) for p in plans])
        return float(vals[:, 1].mean()), float(vals[:, 0].mean())
    raise ValueError(f"mode must be 'executed' or 'planned', got {mode!r}")
