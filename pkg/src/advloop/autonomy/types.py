"""Data passed across the autonomy plug-in boundary."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import Box2

# columns of an SDV state row
X, Y, HEADING, SPEED, ACCEL, CURV = range(6)
STATE_DIM = 6


@dataclass(frozen=True)
class Detection:
    cx: float
    cy: float
    length: float
    width: float
    yaw: float
    confidence: float
    n_points: int = 0

    def __post_init__(self):
        if not (self.length >= self.width > 0):
            raise ValueError(f"detection needs length >= width > 0, got {self.length}, {self.width}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")

    def box(self) -> Box2:
        return Box2(self.cx, self.cy, self.length, self.width, self.yaw)


@dataclass
class Track:
    id: int
    times: list[float] = field(default_factory=list)
    boxes: list[Detection] = field(default_factory=list)
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    misses: int = 0

    MAX_HISTORY = 10

    @property
    def last(self) -> Detection:
        return self.boxes[-1]

    @property
    def center(self) -> np.ndarray:
        return np.array([self.last.cx, self.last.cy])

    def __len__(self):
        return len(self.boxes)


@dataclass(frozen=True, eq=False)
class TrajPrediction:
    track_id: int
    origin: np.ndarray        # current center (2,)
    modes: np.ndarray         # (K, H, 2) world-frame waypoints
    weights: np.ndarray       # (K,)
    dt: float
    length: float = 4.5
    width: float = 1.8
    yaw: float = 0.0

    @property
    def horizon(self) -> float:
        return self.modes.shape[1] * self.dt


@dataclass(frozen=True, eq=False)
class Plan:
    states: np.ndarray        # (N, STATE_DIM) at the control rate
    costs: dict
    candidate: int            # chosen candidate index, -1 for the emergency plan
    dt: float = 0.1

    @property
    def emergency(self) -> bool:
        return self.candidate < 0


@dataclass(frozen=True, eq=False)
class AutonomyOutput:
    detections: tuple[Detection, ...]
    predictions: tuple[TrajPrediction, ...]
    plan: Plan
