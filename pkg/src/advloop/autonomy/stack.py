"""Reference autonomy stack behind the plug-in contract.

Any object with ``reset()`` and ``step(cloud, sdv_state, lane_map, time)``
returning an :class:`AutonomyOutput` can be driven by the simulator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np

from ..sim.scenario import LaneMap
from ..sim.sensor import PointCloud, SensorConfig
from .detect import DetectorConfig, detect
from .plan import PlannerConfig, plan
from .track import Tracker, predict
from .types import HEADING, X, Y, AutonomyOutput, Detection


class Autonomy(Protocol):
    def reset(self) -> None: ...

    def step(self, cloud: PointCloud, sdv_state: np.ndarray, lane_map: LaneMap, time: float) -> AutonomyOutput: ...


@dataclass
class StackConfig:
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    modes: int = 2
    pred_horizon: float = 6.0
    pred_dt: float = 0.5


def to_world(det: Detection, sensor_xy, heading: float) -> Detection:
    c, s = math.cos(heading), math.sin(heading)
    x = sensor_xy[0] + c * det.cx - s * det.cy
    y = sensor_xy[1] + s * det.cx + c * det.cy
    yaw = math.atan2(math.sin(det.yaw + heading), math.cos(det.yaw + heading))
    return replace(det, cx=x, cy=y, yaw=yaw)


class ReferenceStack:
    """Detect -> track -> predict -> plan, deterministic and single-threaded."""

    def __init__(self, sensor: SensorConfig | None = None, config: StackConfig | None = None):
        self.sensor = sensor or SensorConfig()
        cfg = config or StackConfig()
        if cfg.detector.sensor_height != self.sensor.mount[2]:
            cfg = replace(cfg, detector=replace(cfg.detector, sensor_height=self.sensor.mount[2]))
        self.config = cfg
        self.tracker = Tracker()

    def reset(self) -> None:
        self.tracker = Tracker()

    def step(self, cloud: PointCloud, sdv_state, lane_map: LaneMap, time: float) -> AutonomyOutput:
        st = np.asarray(sdv_state, float)
        h = float(st[HEADING])
        mx, my, _ = self.sensor.mount
        sx = st[X] + math.cos(h) * mx - math.sin(h) * my
        sy = st[Y] + math.sin(h) * mx + math.cos(h) * my
        dets = [to_world(d, (sx, sy), h) for d in detect(cloud, self.config.detector)]
        tracks = self.tracker.associate(dets, time)
        preds = predict(tracks, lane_map, self.config.modes, self.config.pred_horizon, self.config.pred_dt)
        p = plan(st, preds, lane_map, self.config.planner)
        return AutonomyOutput(tuple(dets), tuple(preds), p)
