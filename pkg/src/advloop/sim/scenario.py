"""Scenario files, lane maps and per-tick world snapshots."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..geometry import Box2, Polyline, Pose2
from ..shape.mesh import TriangleMesh
from .sensor import SensorConfig

TRAJ_FIELDS = ("t", "x", "y", "heading", "speed")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LaneMap:
    lanes: tuple[Polyline, ...]
    lane_width: float = 3.7
    speed_limit: float = 20.0

    def nearest_lane(self, xy) -> tuple[int, float, float]:
        """(lane index, arc length, lateral offset) of the closest centerline."""
        best = None
        for i, lane in enumerate(self.lanes):
            s, lat = lane.project(xy)
            cand = (abs(float(lat[0])), i, float(s[0]), float(lat[0]))
            if best is None or cand < best:
                best = cand
        return best[1], best[2], best[3]

    def to_dict(self) -> dict:
        return {"lanes": [lane.points.tolist() for lane in self.lanes],
                "lane_width": self.lane_width, "speed_limit": self.speed_limit}

    @classmethod
    def from_dict(cls, d: dict) -> "LaneMap":
        lanes = d.get("lanes")
        if not lanes:
            raise ScenarioError("map needs at least one lane")
        return cls(tuple(Polyline(p) for p in lanes), float(d.get("lane_width", 3.7)),
                   float(d.get("speed_limit", 20.0)))


@dataclass(frozen=True)
class ActorState:
    id: str
    cls: str
    pose: Pose2
    speed: float
    dims: tuple[float, float, float]
    geometry_ref: str = ""

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError(f"actor {self.id}: negative speed")

    def box(self) -> Box2:
        return Box2(self.pose.x, self.pose.y, self.dims[0], self.dims[1], self.pose.heading)


@dataclass(frozen=True, eq=False)
class ScenarioSnapshot:
    time: float
    actors: tuple[ActorState, ...]
    lane_map: LaneMap
    background: tuple[TriangleMesh, ...] = ()

    def __post_init__(self):
        ids = [a.id for a in self.actors]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate actor ids")

    def actor(self, actor_id: str) -> ActorState:
        for a in self.actors:
            if a.id == actor_id:
                return a
        raise KeyError(actor_id)


@dataclass(frozen=True, eq=False)
class ActorSpec:
    id: str
    cls: str
    mode: str                  # "replay" | "reactive"
    trajectory: np.ndarray     # (T, 5) rows of TRAJ_FIELDS at 10 Hz
    dims: tuple[float, float, float]
    asset: str = ""

    def state_at(self, k: int) -> ActorState:
        row = self.trajectory[min(k, len(self.trajectory) - 1)]
        return ActorState(self.id, self.cls, Pose2(row[1], row[2], row[3]), max(float(row[4]), 0.0),
                          self.dims, self.asset)


@dataclass(frozen=True, eq=False)
class SdvSpec:
    initial: np.ndarray                     # x, y, heading, speed
    log: np.ndarray | None = None           # (T, 5) logged trajectory
    sensor: SensorConfig = field(default_factory=SensorConfig)
    dims: tuple[float, float, float] = (4.6, 1.9, 1.6)
    wheelbase: float = 2.8


def _traj(rows, where: str) -> np.ndarray:
    try:
        arr = np.array([[float(r[k]) for k in TRAJ_FIELDS] for r in rows])
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: malformed trajectory ({exc})") from None
    if arr.ndim != 2 or len(arr) == 0:
        raise ScenarioError(f"{where}: empty trajectory")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{where}: non-finite trajectory values")
    return arr


def _traj_rows(arr) -> list[dict]:
    return [{k: round(float(v), 9) for k, v in zip(TRAJ_FIELDS, row)} for row in arr]


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    lane_map: LaneMap
    actors: tuple[ActorSpec, ...]
    sdv: SdvSpec
    dt: float = 0.1
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        ids = [a.id for a in self.actors]
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"{self.name}: duplicate actor ids")
        for a in self.actors:
            if a.mode not in ("replay", "reactive"):
                raise ScenarioError(f"{self.name}: actor {a.id} has unknown mode {a.mode!r}")
        self.check_no_overlap()

    def actor(self, actor_id: str) -> ActorSpec:
        for a in self.actors:
            if a.id == actor_id:
                return a
        raise KeyError(actor_id)

    def sdv_pose0(self) -> Pose2:
        x, y, h, _ = self.sdv.initial
        return Pose2(x, y, h)

    def snapshot(self, k: int = 0) -> ScenarioSnapshot:
        return ScenarioSnapshot(k * self.dt, tuple(a.state_at(k) for a in self.actors), self.lane_map)

    def check_no_overlap(self) -> None:
        from ..metrics.iou import boxes_overlap

        boxes = [(a.id, a.state_at(0).box()) for a in self.actors]
        x, y, h, _ = self.sdv.initial
        boxes.append(("sdv", Box2(x, y, self.sdv.dims[0], self.sdv.dims[1], h)))
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                if boxes_overlap(boxes[i][1], boxes[j][1]):
                    raise ScenarioError(f"{self.name}: {boxes[i][0]} and {boxes[j][0]} overlap at t=0")

    def to_dict(self) -> dict:
        sdv = {"initial": dict(zip(("x", "y", "heading", "speed"), map(float, self.sdv.initial))),
               "sensor": self.sdv.sensor.to_dict(), "dims": list(self.sdv.dims),
               "wheelbase": self.sdv.wheelbase}
        if self.sdv.log is not None:
            sdv["log"] = _traj_rows(self.sdv.log)
        return {
            "name": self.name, "dt": self.dt, "tags": list(self.tags),
            "map": self.lane_map.to_dict(),
            "actors": [{"id": a.id, "class": a.cls, "mode": a.mode, "dims": list(a.dims),
                        **({"asset": a.asset} if a.asset else {}),
                        "trajectory": _traj_rows(a.trajectory)} for a in self.actors],
            "sdv": sdv,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            name = str(d.get("name", "scenario"))
            lane_map = LaneMap.from_dict(d["map"])
            actors = tuple(
                ActorSpec(str(a["id"]), a["class"], a.get("mode", "replay"),
                          _traj(a["trajectory"], f"actor {a['id']}"),
                          tuple(float(v) for v in a["dims"]), a.get("asset", ""))
                for a in d.get("actors", []))
            s = d["sdv"]
            ini = s["initial"]
            log = _traj(s["log"], "sdv log") if s.get("log") else None
            sensor = SensorConfig.from_dict(s["sensor"]) if "sensor" in s else SensorConfig()
            sdv = SdvSpec(np.array([ini["x"], ini["y"], ini["heading"], ini["speed"]], float), log, sensor,
                          tuple(s.get("dims", (4.6, 1.9, 1.6))), float(s.get("wheelbase", 2.8)))
        except KeyError as exc:
            raise ScenarioError(f"scenario missing field {exc}") from None
        return cls(name, lane_map, actors, sdv, float(d.get("dt", 0.1)), tuple(d.get("tags", ())))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)
