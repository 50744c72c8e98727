"""Deterministic synthetic highway scenarios (the bundled evaluation suite)."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ..geometry import Polyline
from ..shape.vehicles import CLASS_DIMS, VEHICLE_CLASSES
from .scenario import ActorSpec, LaneMap, Scenario, SdvSpec
from .sensor import SensorConfig

LANE_WIDTH = 3.7
SPEED_LIMIT = 20.0
DT = 0.1
LOG_SECONDS = 11.0          # 5 s episode + 6 s of futures
SDV_S0 = 60.0

# denser than the 16-beam default so vehicles remain detectable across the ROI
SUITE_SENSOR = SensorConfig.uniform(32, -16.0, 4.0, 0.4, max_range=120.0, noise_sigma=0.01)

# (name, curved, n_actors, multi-actor)
_LAYOUT = [
    ("hw00_straight", False, 3, False),
    ("hw01_straight", False, 4, False),
    ("hw02_curve", True, 4, False),
    ("hw03_straight", False, 5, False),
    ("hw04_curve", True, 5, False),
    ("hw05_straight", False, 6, False),
    ("hw06_curve", True, 6, False),
    ("hw07_multi", False, 8, True),
    ("hw08_multi_curve", True, 7, True),
    ("hw09_multi", False, 8, True),
]


def _lanes(curved: bool, length: float = 700.0, radius: float = 700.0) -> tuple[Polyline, ...]:
    s = np.arange(0.0, length + 1e-9, 2.0)
    lanes = []
    for off in (-LANE_WIDTH, 0.0, LANE_WIDTH):
        if curved:
            r = radius - off        # lanes to the left sit on smaller radii
            th = s / radius
            pts = np.stack([r * np.sin(th), radius - r * np.cos(th)], axis=1)
        else:
            pts = np.stack([s, np.full_like(s, off)], axis=1)
        lanes.append(Polyline(pts))
    return tuple(lanes)


def _follow(lane: Polyline, s0: float, speeds: np.ndarray) -> np.ndarray:
    """(t, x, y, heading, speed) rows for a vehicle driving its lane centerline."""
    s = s0 + np.concatenate([[0.0], np.cumsum(0.5 * (speeds[:-1] + speeds[1:]) * DT)])
    p = lane.point_at(s)
    h = lane.heading_at(s)
    t = DT * np.arange(len(speeds))
    return np.column_stack([t, p[:, 0], p[:, 1], h, speeds])


def _log_driver(lane: Polyline, s0: float, v0: float, leaders: list[np.ndarray], n: int) -> np.ndarray:
    """Human-like SDV log: gentle IDM car following at 90% of the limit."""
    from ..loop.idm import IdmParams, idm_accel

    p = IdmParams(v0=0.9 * SPEED_LIMIT, time_headway=1.8, a_max=1.0)
    s, v = s0, v0
    speeds = [v]
    ss = [s]
    for k in range(n - 1):
        gap, vl = math.inf, 0.0
        for traj in leaders:
            ls, _ = lane.project(traj[min(k, len(traj) - 1), 1:3][None])
            d = float(ls[0]) - s - 4.8
            if 0 < d < gap:
                gap, vl = d, float(traj[min(k, len(traj) - 1), 4])
        a = idm_accel(v, gap, vl, p)
        v_new = max(0.0, v + a * DT)
        s += 0.5 * (v + v_new) * DT
        v = v_new
        ss.append(s)
        speeds.append(v)
    ss = np.array(ss)
    # a slow, small lateral drift inside the lane, as in recorded driving
    drift = 0.35 * np.sin(2 * math.pi * np.arange(n) * DT / 9.0)
    pts = lane.point_at(ss)
    h = lane.heading_at(ss)
    pts = pts + drift[:, None] * np.stack([-np.sin(h), np.cos(h)], axis=1)
    heading = np.arctan2(np.gradient(pts[:, 1]), np.gradient(pts[:, 0]))
    return np.column_stack([DT * np.arange(n), pts[:, 0], pts[:, 1], heading, np.array(speeds)])


def make_scenario(name: str, curved: bool, n_actors: int, multi: bool, seed: int) -> Scenario:
    rng = np.random.default_rng(seed)
    lanes = _lanes(curved)
    n = int(round(LOG_SECONDS / DT)) + 1
    sdv_lane = 1
    taken: list[tuple[int, float]] = [(sdv_lane, SDV_S0)]
    n_ahead = max(5, n_actors - 2) if multi else max(1, n_actors - int(rng.integers(1, 3)))
    n_ahead = min(n_ahead, n_actors)
    specs = []
    # the first actor is the primary attack target: same lane, close ahead
    slots = []
    for i in range(n_actors):
        for _ in range(1000):
            if i == 0:
                lane, ds = sdv_lane, float(rng.uniform(16.0, 24.0))
            elif i < n_ahead:
                lane, ds = int(rng.integers(0, 3)), float(rng.uniform(12.0, 55.0))
            else:
                lane, ds = int(rng.integers(0, 3)), float(rng.uniform(-40.0, -12.0))
            s = SDV_S0 + ds
            if all(abs(s - ts) > 11.0 or abs(lane - tl) > 0 for tl, ts in taken):
                break
        else:
            raise RuntimeError("could not place actors")
        taken.append((lane, s))
        slots.append((lane, s))
    for i, (lane, s) in enumerate(slots):
        cls = VEHICLE_CLASSES[int(rng.integers(0, len(VEHICLE_CLASSES)))]
        dims = tuple(round(float(rng.uniform(lo, hi)), 3) for lo, hi in CLASS_DIMS[cls])
        v0 = float(rng.uniform(11.0, 16.0))
        accel = float(rng.uniform(-0.4, 0.4))
        speeds = np.clip(v0 + accel * DT * np.arange(n), 6.0, SPEED_LIMIT)
        traj = _follow(lanes[lane], s, speeds)
        mode = "reactive" if rng.uniform() < 0.4 and i != 0 else "replay"
        specs.append(ActorSpec(f"a{i}", cls, mode, traj, dims))
    leaders = [a.trajectory for a, (lane, s) in zip(specs, slots) if lane == sdv_lane and s > SDV_S0]
    v_sdv = 15.0
    log = _log_driver(lanes[sdv_lane], SDV_S0, v_sdv, leaders, n)
    # closed-loop runs start exactly where the log starts
    sdv = SdvSpec(log[0, 1:5].copy(), log, SUITE_SENSOR)
    tags = ("multi",) if multi else ()
    return Scenario(name, LaneMap(lanes, LANE_WIDTH, SPEED_LIMIT), tuple(specs), sdv, DT, tags)


def bundled_suite() -> list[Scenario]:
    return [make_scenario(name, curved, n, multi, seed=1000 + i)
            for i, (name, curved, n, multi) in enumerate(_LAYOUT)]


def nominal_empty_road() -> Scenario:
    """No actors, straight lane, SDV at the speed limit on the centerline."""
    lanes = _lanes(False)
    n = int(round(LOG_SECONDS / DT)) + 1
    log = _follow(lanes[1], SDV_S0, np.full(n, SPEED_LIMIT))
    p0 = lanes[1].point_at(SDV_S0)
    sdv = SdvSpec(np.array([p0[0], p0[1], 0.0, SPEED_LIMIT]), log, SUITE_SENSOR)
    return Scenario("nominal_empty", LaneMap(lanes, LANE_WIDTH, SPEED_LIMIT), (), sdv, DT, ("nominal",))


def write_suite(out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for sc in bundled_suite() + [nominal_empty_road()]:
        p = out / f"{sc.name}.json"
        sc.save(p)
        paths.append(p)
    return paths
