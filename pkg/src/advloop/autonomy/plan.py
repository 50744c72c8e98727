"""Sampling planner over lane-relative candidates and the kinematic bicycle."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..sim.scenario import LaneMap
from .types import ACCEL, CURV, HEADING, SPEED, STATE_DIM, X, Y, Plan, TrajPrediction


@dataclass(frozen=True)
class PlannerConfig:
    horizon: float = 5.0
    dt: float = 0.1
    n_offsets: int = 5
    max_offset: float = 1.5
    n_speeds: int = 7
    v_max: float | None = None      # defaults to the map speed limit
    wheelbase: float = 2.8
    steer_max: float = 0.5
    a_max: float = 2.0
    a_min: float = -6.0
    jerk_max: float = 4.0
    speed_gain: float = 0.6
    lookahead_time: float = 1.0
    lookahead_min: float = 6.0
    w_safety: float = 10.0
    w_comfort: float = 1.0
    w_progress: float = 0.5
    d_hard: float = 0.5
    margin: float = 2.0             # in-path clearance wanted: margin + headway * speed
    headway: float = 1.0
    side_margin: float = 1.0        # clearance wanted from actors outside the SDV's path
    length: float = 4.6
    width: float = 1.9


def bicycle_step(state, accel: float, steer: float, dt: float, wheelbase: float = 2.8) -> np.ndarray:
    """Explicit-Euler kinematic bicycle; speed is clamped at zero.

    Returns the next state row; its accel/curvature columns repeat the inputs.
    """
    s = np.asarray(state, float)
    x, y, th, v = s[X], s[Y], s[HEADING], s[SPEED]
    curv = math.tan(steer) / wheelbase
    out = np.empty(STATE_DIM)
    out[X] = x + v * math.cos(th) * dt
    out[Y] = y + v * math.sin(th) * dt
    out[HEADING] = th + v * curv * dt
    out[SPEED] = max(0.0, v + accel * dt)
    out[ACCEL] = accel
    out[CURV] = curv
    return out


def _bicycle_batch(st: np.ndarray, accel: np.ndarray, steer: np.ndarray, dt: float, wheelbase: float):
    """Vectorised twin of :func:`bicycle_step` over candidates (same operation order)."""
    curv = np.tan(steer) / wheelbase
    out = np.empty_like(st)
    v = st[:, SPEED]
    out[:, X] = st[:, X] + v * np.cos(st[:, HEADING]) * dt
    out[:, Y] = st[:, Y] + v * np.sin(st[:, HEADING]) * dt
    out[:, HEADING] = st[:, HEADING] + v * curv * dt
    out[:, SPEED] = np.maximum(0.0, v + accel * dt)
    out[:, ACCEL] = accel
    out[:, CURV] = curv
    return out


def comfort_terms(states: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference jerk and lateral acceleration v^2 * kappa (last axis = time)."""
    a = states[..., ACCEL]
    jerk = (a[..., 2:] - a[..., :-2]) / (2.0 * dt)
    lat = states[..., SPEED] ** 2 * states[..., CURV]
    return jerk, lat


def _circles(x, y, th, length, width):
    """Three covering circles along the heading: centers (..., 3, 2) and radius."""
    off = np.array([-length / 3.0, 0.0, length / 3.0])
    cx = x[..., None] + np.cos(th)[..., None] * off
    cy = y[..., None] + np.sin(th)[..., None] * off
    r = math.hypot(length / 6.0, width / 2.0)
    return np.stack([cx, cy], axis=-1), r


def clearance(states: np.ndarray, predictions: list[TrajPrediction], dt: float, cfg: PlannerConfig,
              with_path: bool = False):
    """Min clearance (m) per candidate and prediction waypoint time, shape (C, H, P*K).

    With ``with_path`` also returns a same-shaped mask of waypoints that lie
    ahead of the SDV and laterally inside its swept corridor.
    """
    if not predictions:
        return (None, None) if with_path else None
    pdt = predictions[0].dt
    h = predictions[0].modes.shape[1]
    idx = np.round(pdt * np.arange(1, h + 1) / dt).astype(int)
    valid = idx < states.shape[1]
    idx = idx[valid]
    s = states[:, idx]                                        # (C, H, D)
    sc, sr = _circles(s[..., X], s[..., Y], s[..., HEADING], cfg.length, cfg.width)
    out, path = [], []
    hx, hy = np.cos(s[..., HEADING]), np.sin(s[..., HEADING])   # (C, H)
    for p in predictions:
        wp = p.modes[:, valid]                                # (K, H, 2)
        prev = np.concatenate([np.broadcast_to(p.origin, (len(wp), 1, 2)), wp[:, :-1]], axis=1)
        d = wp - prev
        moving = np.hypot(d[..., 0], d[..., 1]) > 1e-6
        yaw = np.where(moving, np.arctan2(d[..., 1], d[..., 0]), p.yaw)
        ac, ar = _circles(wp[..., 0], wp[..., 1], yaw, p.length, p.width)   # (K, H, 3, 2)
        diff = sc[:, None, :, :, None, :] - ac[None, :, :, None, :, :]      # (C, K, H, 3, 3, 2)
        dist = np.sqrt((diff ** 2).sum(axis=-1)).min(axis=(-1, -2)) - sr - ar
        out.append(np.moveaxis(dist, 1, 2))                                 # (C, H, K)
        if with_path:
            rx = wp[None, ..., 0] - s[:, None, :, X]                        # (C, K, H)
            ry = wp[None, ..., 1] - s[:, None, :, Y]
            lon = rx * hx[:, None] + ry * hy[:, None]
            lat = -rx * hy[:, None] + ry * hx[:, None]
            inside = (lon > 0.0) & (np.abs(lat) < 0.5 * (cfg.width + p.width) + cfg.d_hard)
            path.append(np.moveaxis(inside, 1, 2))
    if with_path:
        return np.concatenate(out, axis=2), np.concatenate(path, axis=2)
    return np.concatenate(out, axis=2)


def _rollout(x0: np.ndarray, lane, offsets, targets, cfg: PlannerConfig, n: int):
    """Roll every (offset, target speed) candidate forward through the bicycle."""
    c = len(offsets)
    traj = np.empty((c, n + 1, STATE_DIM))
    st = np.repeat(x0[None], c, axis=0)
    a_prev = np.full(c, x0[ACCEL])
    s0, _ = lane.project(x0[None, :2])
    s_now = np.full(c, s0[0])
    for k in range(n + 1):
        v = st[:, SPEED]
        a_cmd = np.minimum(np.maximum(cfg.speed_gain * (targets - v), cfg.a_min), cfg.a_max)
        a = np.minimum(np.maximum(a_cmd, a_prev - cfg.jerk_max * cfg.dt), a_prev + cfg.jerk_max * cfg.dt)
        # do not command braking through zero speed
        a = np.where(v + a * cfg.dt < 0.0, -v / cfg.dt, a)
        ld = np.maximum(cfg.lookahead_min, cfg.lookahead_time * v)
        s_look = s_now + ld
        hd = lane.heading_at(s_look)
        goal = lane.point_at(s_look) + offsets[:, None] * np.stack([-np.sin(hd), np.cos(hd)], axis=1)
        dx = goal[:, 0] - st[:, X]
        dy = goal[:, 1] - st[:, Y]
        alpha = np.arctan2(dy, dx) - st[:, HEADING]
        alpha = np.arctan2(np.sin(alpha), np.cos(alpha))
        dist = np.hypot(dx, dy)
        steer = np.minimum(np.maximum(np.arctan(2.0 * cfg.wheelbase * np.sin(alpha) / dist), -cfg.steer_max),
                           cfg.steer_max)
        st = st.copy()
        st[:, ACCEL] = a
        st[:, CURV] = np.tan(steer) / cfg.wheelbase
        traj[:, k] = st
        if k < n:
            # arc length advances with the along-lane velocity component
            s_now = s_now + v * np.cos(st[:, HEADING] - lane.heading_at(s_now)) * cfg.dt
            st = _bicycle_batch(st, a, steer, cfg.dt, cfg.wheelbase)
            a_prev = a
    return traj


def plan(sdv_state, predictions: list[TrajPrediction], lane_map: LaneMap,
         cfg: PlannerConfig = PlannerConfig()) -> Plan:
    """Pick the lowest-cost lane-relative candidate (first index wins ties)."""
    x0 = np.asarray(sdv_state, float).copy()
    n = int(round(cfg.horizon / cfg.dt))
    v_max = cfg.v_max if cfg.v_max is not None else lane_map.speed_limit
    lane_id, s0, _ = lane_map.nearest_lane(x0[:2])
    lane = lane_map.lanes[lane_id]
    offs = np.linspace(-cfg.max_offset, cfg.max_offset, cfg.n_offsets)
    speeds = np.linspace(0.0, v_max, cfg.n_speeds)
    offsets = np.repeat(offs, len(speeds))
    targets = np.tile(speeds, len(offs))
    traj = _rollout(x0, lane, offsets, targets, cfg, n)

    jerk, lat = comfort_terms(traj, cfg.dt)
    comfort = (jerk ** 2).mean(axis=1) + (lat ** 2).mean(axis=1)
    s_end, _ = lane.project(traj[:, -1, :2])
    progress = s_end - s0
    clr, in_path = clearance(traj, predictions, cfg.dt, cfg, with_path=True)
    if clr is None:
        safety = np.zeros(len(traj))
    else:
        weights = np.concatenate([p.weights for p in predictions])
        pdt = predictions[0].dt
        idx = np.round(pdt * np.arange(1, predictions[0].modes.shape[1] + 1) / cfg.dt).astype(int)
        idx = idx[idx < traj.shape[1]]
        v = traj[:, idx, SPEED][:, :, None]
        want = np.where(in_path, cfg.margin + cfg.headway * v, cfg.side_margin)
        hinge = np.maximum(0.0, want - clr)
        safety = (hinge * weights).sum(axis=(1, 2))
        safety = np.where((clr < cfg.d_hard).any(axis=(1, 2)), np.inf, safety)
    total = cfg.w_safety * safety + cfg.w_comfort * comfort + cfg.w_progress * (-progress)
    if not np.any(np.isfinite(total)):
        return emergency_plan(x0, cfg)
    best = int(np.argmin(total))
    costs = {"safety": float(safety[best]), "comfort": float(comfort[best]),
             "progress": float(progress[best]), "total": float(total[best])}
    return Plan(traj[best], costs, best, cfg.dt)


def emergency_plan(x0: np.ndarray, cfg: PlannerConfig) -> Plan:
    """Straight-line braking at the maximum deceleration."""
    n = int(round(cfg.horizon / cfg.dt))
    traj = np.empty((n + 1, STATE_DIM))
    st = x0.copy()
    for k in range(n + 1):
        v = st[SPEED]
        a = cfg.a_min if v + cfg.a_min * cfg.dt >= 0.0 else -v / cfg.dt
        st = st.copy()
        st[ACCEL] = a
        st[CURV] = 0.0
        traj[k] = st
        if k < n:
            st = bicycle_step(st, a, 0.0, cfg.dt, cfg.wheelbase)
    return Plan(traj, {"safety": math.inf, "comfort": 0.0, "progress": 0.0, "total": math.inf}, -1, cfg.dt)
