"""Intelligent Driver Model for reactive actors following their lane."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import Pose2
from ..sim.scenario import LaneMap


@dataclass(frozen=True)
class IdmParams:
    v0: float = 20.0
    time_headway: float = 1.5
    s0: float = 2.0
    a_max: float = 1.5
    b: float = 2.0
    delta: float = 4.0


def idm_accel(v: float, gap: float, leader_speed: float, p: IdmParams) -> float:
    free = 1.0 - (v / p.v0) ** p.delta if p.v0 > 0 else -1.0
    if not math.isfinite(gap):
        return p.a_max * free
    dv = v - leader_speed
    s_star = p.s0 + v * p.time_headway + v * dv / (2.0 * math.sqrt(p.a_max * p.b))
    s_star = max(s_star, 0.0)
    gap = max(gap, 1e-3)
    return p.a_max * (free - (s_star / gap) ** 2)


@dataclass(frozen=True)
class ReactiveActor:
    """Lane-following state: lane index, arc length, lateral offset, speed."""

    lane: int
    s: float
    offset: float
    speed: float
    length: float

    def pose(self, lane_map: LaneMap) -> Pose2:
        lane = lane_map.lanes[self.lane]
        h = float(lane.heading_at(self.s))
        p = lane.point_at(self.s)
        return Pose2(float(p[0] - math.sin(h) * self.offset), float(p[1] + math.cos(h) * self.offset), h)


def reactive_actor_step(actor: ReactiveActor, gap: float, leader_speed: float, dt: float,
                        params: IdmParams = IdmParams()) -> ReactiveActor:
    """Advance along the lane with IDM; the ballistic update never reverses."""
    a = idm_accel(actor.speed, gap, leader_speed, params)
    v_next = actor.speed + a * dt
    if v_next < 0.0:
        # stop within the step: distance v^2 / (2|a|)
        ds = 0.5 * actor.speed ** 2 / max(-a, 1e-12)
        v_next = 0.0
    else:
        ds = actor.speed * dt + 0.5 * a * dt * dt
    return ReactiveActor(actor.lane, actor.s + ds, actor.offset, v_next, actor.length)


def leader_gap(actor: ReactiveActor, others, lane_map: LaneMap) -> tuple[float, float]:
    """Bumper gap and speed of the nearest vehicle ahead in the same lane.

    ``others`` yields (x, y, speed, length) for every other vehicle.
    """
    lane = lane_map.lanes[actor.lane]
    best = (math.inf, 0.0)
    half = 0.5 * lane_map.lane_width
    for x, y, v, length in others:
        s, lat = lane.project(np.array([[x, y]]))
        if abs(float(lat[0]) - actor.offset) >= half:
            continue
        ds = float(s[0]) - actor.s
        if ds <= 0:
            continue
        gap = ds - 0.5 * (actor.length + length)
        if gap < best[0]:
            best = (gap, v)
    return best
