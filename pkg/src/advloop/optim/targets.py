"""Choice of the actors whose shapes are attacked."""
from __future__ import annotations

import numpy as np

from ..sim.scenario import Scenario


def select_target_actors(scenario: Scenario, m: int) -> list[str]:
    """The ``m`` nearest actors strictly in front of the SDV at t=0, nearest first."""
    if m < 1:
        raise ValueError("m must be >= 1")
    pose = scenario.sdv_pose0()
    ahead = []
    for a in scenario.actors:
        s = a.state_at(0)
        local = pose.to_local(np.array([s.pose.x, s.pose.y]))
        if local[0] > 0:
            ahead.append((float(np.hypot(*local)), a.id))
    ahead.sort()
    if len(ahead) < m:
        raise ValueError(f"scenario {scenario.name} has {len(ahead)} actor(s) ahead of the SDV, need {m}")
    return [aid for _, aid in ahead[:m]]
