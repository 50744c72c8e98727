"""Episode trace persistence: a JSON index plus one binary block of point clouds.

``trace.json`` holds per-tick actor poses, autonomy outputs, the executed SDV
state, ground-truth boxes and StepCosts. ``clouds.bin`` concatenates the
tick clouds as little-endian (u32 ray, f32 x, y, z) records; the index stores
each block's record offset, record count and sha256 digest.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..sim.sensor import CLOUD_RECORD, PointCloud
from .episode import EpisodeTrace

INDEX_FILE = "trace.json"
CLOUD_FILE = "clouds.bin"
FORMAT_VERSION = 1


class TraceError(ValueError):
    pass


def _box(b) -> list[float]:
    return [b.cx, b.cy, b.length, b.width, b.yaw]


def _tick_entry(tick, offset: int, count: int) -> dict:
    out = tick.output
    return {
        "time": tick.time,
        "cloud": {"digest": tick.cloud_digest, "offset": offset, "count": count},
        "sdv_state": tick.sdv_state.tolist(),
        "actors": [{"id": a.id, "x": a.pose.x, "y": a.pose.y, "heading": a.pose.heading, "speed": a.speed,
                    "dims": list(a.dims)} for a in tick.snapshot.actors],
        "gt_boxes": {k: _box(b) for k, b in tick.gt_boxes.items()},
        "detections": [[d.cx, d.cy, d.length, d.width, d.yaw, d.confidence] for d in out.detections],
        "predictions": [{"track": p.track_id, "origin": p.origin.tolist(), "modes": p.modes.tolist(),
                         "weights": p.weights.tolist(), "dt": p.dt} for p in out.predictions],
        "plan": {"candidate": out.plan.candidate, "dt": out.plan.dt, "states": out.plan.states.tolist()},
        "cost": None if tick.cost is None else asdict(tick.cost),
    }


def save_trace(trace: EpisodeTrace, directory, meta: dict | None = None) -> Path:
    """Write ``trace`` under ``directory``; ticks without a kept cloud get an empty block."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries, offset = [], 0
    with open(d / CLOUD_FILE, "wb") as fh:
        for tick in trace.ticks:
            count = 0
            if tick.cloud is not None:
                blob = tick.cloud.to_bytes()
                if hashlib.sha256(blob).hexdigest() != tick.cloud_digest:
                    raise TraceError(f"tick {tick.time}: cloud does not match its recorded digest")
                fh.write(blob)
                count = len(tick.cloud)
            entries.append(_tick_entry(tick, offset, count))
            offset += count
    index = {
        "format": FORMAT_VERSION,
        "scenario": trace.scenario,
        "mode": trace.mode,
        "config": {"duration": trace.config.duration, "rate": trace.config.rate,
                   "roi_radius": trace.config.roi_radius, "actor_mode": trace.config.actor_mode,
                   "seed": trace.config.seed, "objective": trace.config.objective,
                   "weights": asdict(trace.config.weights)},
        "overrides": list(trace.overrides),
        "aborted": trace.aborted,
        "error": trace.error,
        "cost": trace.cost,
        "executed": trace.executed.tolist(),
        "meta": meta or {},
        "ticks": entries,
    }
    path = d / INDEX_FILE
    path.write_text(json.dumps(index, indent=1))
    return path


def load_index(directory) -> dict:
    path = Path(directory) / INDEX_FILE
    if not path.exists():
        raise TraceError(f"no trace index at {path}")
    index = json.loads(path.read_text())
    if index.get("format") != FORMAT_VERSION:
        raise TraceError(f"{path}: unsupported trace format {index.get('format')!r}")
    return index


def read_cloud(directory, tick: int, index: dict | None = None, verify: bool = True) -> PointCloud:
    """Point cloud of one tick; the digest is checked unless ``verify`` is off."""
    index = index or load_index(directory)
    entry = index["ticks"][tick]["cloud"]
    size = CLOUD_RECORD.itemsize
    with open(Path(directory) / CLOUD_FILE, "rb") as fh:
        fh.seek(entry["offset"] * size)
        blob = fh.read(entry["count"] * size)
    if len(blob) != entry["count"] * size:
        raise TraceError(f"tick {tick}: truncated cloud block")
    if verify and entry["count"] and hashlib.sha256(blob).hexdigest() != entry["digest"]:
        raise TraceError(f"tick {tick}: cloud digest mismatch")
    return PointCloud.from_bytes(blob)


def step_cost_table(index: dict) -> np.ndarray:
    """(ticks, 5) array of l_det, l_pred, c_jerk, c_lat, C_t from a trace index."""
    rows = [[c["l_det"], c["l_pred"], c["c_jerk"], c["c_lat"], c["combined"]]
            for c in (t["cost"] for t in index["ticks"]) if c is not None]
    return np.array(rows, float).reshape(-1, 5)
