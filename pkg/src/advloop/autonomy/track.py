"""Greedy nearest-neighbour tracking and lane-aware trajectory prediction."""
from __future__ import annotations

import itertools

import numpy as np

from ..sim.scenario import LaneMap
from .types import Detection, Track, TrajPrediction

GATE = 3.0
MAX_MISSES = 5
SMOOTHING = 0.5
MODE_WEIGHTS = (0.6, 0.4)


class Tracker:
    """Per-episode track state; ``associate`` is called once per frame."""

    def __init__(self, gate: float = GATE, max_misses: int = MAX_MISSES, smoothing: float = SMOOTHING):
        self.gate = gate
        self.max_misses = max_misses
        self.smoothing = smoothing
        self.tracks: list[Track] = []
        self._ids = itertools.count()

    def associate(self, detections: list[Detection], time: float) -> list[Track]:
        return associate(detections, self, time)


def associate(detections: list[Detection], tracker: Tracker, time: float) -> list[Track]:
    """Update ``tracker`` with one frame of world-frame detections; returns live tracks."""
    tracks = tracker.tracks
    pairs = []
    for ti, tr in enumerate(tracks):
        c = tr.center
        for di, d in enumerate(detections):
            dist = float(np.hypot(d.cx - c[0], d.cy - c[1]))
            if dist <= tracker.gate:
                pairs.append((dist, ti, di))
    pairs.sort()
    used_t, used_d = set(), set()
    for dist, ti, di in pairs:
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
        _update(tracks[ti], detections[di], time, tracker.smoothing)
    for ti, tr in enumerate(tracks):
        if ti not in used_t:
            tr.misses += 1
    for di, d in enumerate(detections):
        if di not in used_d:
            tracks.append(Track(next(tracker._ids), [time], [d]))
    tracker.tracks = [t for t in tracks if t.misses < tracker.max_misses]
    return tracker.tracks


def _update(track: Track, det: Detection, time: float, w: float) -> None:
    # finite difference against the oldest retained frame: box centres jitter
    # by a few cells per frame, and a longer baseline divides that noise down
    dt = time - track.times[0]
    if dt > 0:
        first = track.boxes[0]
        inst = (np.array([det.cx - first.cx, det.cy - first.cy])) / dt
        track.velocity = inst if len(track) == 1 else w * inst + (1.0 - w) * track.velocity
    track.times.append(time)
    track.boxes.append(det)
    del track.times[:-Track.MAX_HISTORY]
    del track.boxes[:-Track.MAX_HISTORY]
    track.misses = 0


def predict(tracks: list[Track], lane_map: LaneMap, k: int = 2, horizon: float = 6.0,
            dt: float = 0.5) -> list[TrajPrediction]:
    """Mode 1 extrapolates at constant velocity, mode 2 follows the nearest lane."""
    h = int(round(horizon / dt))
    steps = dt * np.arange(1, h + 1)
    weights = np.array(MODE_WEIGHTS[:k] if k <= 2 else [1.0 / k] * k, float)
    weights = weights / weights.sum()
    out = []
    for tr in tracks:
        if len(tr) < 2 or tr.misses > 0:
            continue
        c = tr.center
        v = tr.velocity
        cv = c + steps[:, None] * v
        modes = [cv]
        if k >= 2:
            lane = lane_map.lanes[lane_map.nearest_lane(c)[0]]
            s0, _ = lane.project(c)
            speed = float(np.hypot(*v))
            direction = 1.0 if np.dot(v, _tangent(lane, s0[0])) >= 0 else -1.0
            s = s0[0] + direction * speed * steps
            normal_off = _offset_point(lane, c, s0[0])
            disp = _offset_curve(lane, s, normal_off) - _offset_curve(lane, s0, normal_off)
            modes.append(c + disp)
            modes.extend([cv] * (k - 2))
        out.append(TrajPrediction(tr.id, c.copy(), np.stack(modes), weights, dt,
                                  tr.last.length, tr.last.width, tr.last.yaw))
    return out


def _tangent(lane, s) -> np.ndarray:
    h = float(lane.heading_at(s))
    return np.array([np.cos(h), np.sin(h)])


def _offset_point(lane, c, s0) -> float:
    """Signed offset of ``c`` from the centerline along the local normal."""
    h = float(lane.heading_at(s0))
    rel = c - lane.point_at(s0)
    return float(-np.sin(h) * rel[0] + np.cos(h) * rel[1])


def _offset_curve(lane, s, off) -> np.ndarray:
    s = np.atleast_1d(np.asarray(s, float))
    h = lane.heading_at(s)
    return lane.point_at(s) + off * np.stack([-np.sin(h), np.cos(h)], axis=-1)
