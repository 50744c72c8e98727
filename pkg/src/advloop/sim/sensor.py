"""Spinning LiDAR configuration and point clouds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CLOUD_RECORD = np.dtype([("ray", "<u4"), ("x", "<f4"), ("y", "<f4"), ("z", "<f4")])


@dataclass(frozen=True)
class SensorConfig:
    """Elevation channels (rad), azimuth step (rad), range (m), mount offset on the SDV."""

    elevations: tuple[float, ...] = tuple(np.deg2rad(np.linspace(-15.0, 15.0, 16)).tolist())
    azimuth_step: float = math.radians(0.5)
    max_range: float = 120.0
    mount: tuple[float, float, float] = (0.0, 0.0, 1.9)
    noise_sigma: float = 0.01
    _dirs: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "elevations", tuple(float(e) for e in self.elevations))
        object.__setattr__(self, "mount", tuple(float(m) for m in self.mount))
        if not self.elevations:
            raise ValueError("sensor needs at least one elevation channel")
        if not self.max_range > 0:
            raise ValueError("max range must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be non-negative")
        if not self.azimuth_step > 0:
            raise ValueError("azimuth step must be positive")
        n = 2.0 * math.pi / self.azimuth_step
        if abs(round(n) - n) * self.azimuth_step > 1e-9:
            raise ValueError("azimuth step must divide 2*pi")

    @classmethod
    def uniform(cls, channels: int, lo_deg: float, hi_deg: float, azimuth_deg: float, **kw) -> "SensorConfig":
        return cls(tuple(np.deg2rad(np.linspace(lo_deg, hi_deg, channels)).tolist()),
                   math.radians(azimuth_deg), **kw)

    @property
    def n_azimuth(self) -> int:
        return int(round(2.0 * math.pi / self.azimuth_step))

    @property
    def n_rays(self) -> int:
        return len(self.elevations) * self.n_azimuth

    def directions(self) -> np.ndarray:
        """Unit ray directions in the sensor frame; ray index = channel * n_azimuth + azimuth index."""
        if self._dirs is None:
            el = np.asarray(self.elevations)[:, None]
            az = (np.arange(self.n_azimuth) * self.azimuth_step)[None, :]
            d = np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az),
                          np.broadcast_to(np.sin(el), (el.size, az.size))], axis=-1).reshape(-1, 3)
            d = np.ascontiguousarray(d)
            d.setflags(write=False)
            object.__setattr__(self, "_dirs", d)
        return self._dirs

    def to_dict(self) -> dict:
        return {"elevations_deg": np.rad2deg(self.elevations).round(9).tolist(),
                "azimuth_step_deg": round(math.degrees(self.azimuth_step), 9),
                "max_range": self.max_range, "mount": list(self.mount), "noise_sigma": self.noise_sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "SensorConfig":
        if "channels" in d:
            el = np.deg2rad(np.linspace(d["elevation_min_deg"], d["elevation_max_deg"], d["channels"]))
        elif "elevations_deg" in d:
            el = np.deg2rad(d["elevations_deg"])
        else:
            el = cls.__dataclass_fields__["elevations"].default
        return cls(tuple(np.asarray(el, float).tolist()),
                   math.radians(d.get("azimuth_step_deg", 0.5)),
                   float(d.get("max_range", 120.0)),
                   tuple(d.get("mount", (0.0, 0.0, 1.9))),
                   float(d.get("noise_sigma", 0.01)))


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Returns in the sensor frame with the index of the ray that produced each."""

    points: np.ndarray
    ray_index: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, np.float64).reshape(-1, 3))
        object.__setattr__(self, "ray_index", np.asarray(self.ray_index, np.uint32).reshape(-1))
        if len(self.points) != len(self.ray_index):
            raise ValueError("points and ray indices differ in length")

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros(0, np.uint32))

    def to_bytes(self) -> bytes:
        rec = np.empty(len(self), CLOUD_RECORD)
        rec["ray"] = self.ray_index
        rec["x"], rec["y"], rec["z"] = self.points.T.astype(np.float32)
        return rec.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PointCloud":
        if len(data) % CLOUD_RECORD.itemsize:
            raise ValueError("point cloud blob is not a whole number of records")
        rec = np.frombuffer(data, CLOUD_RECORD)
        pts = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
        return cls(pts, rec["ray"].copy())

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "PointCloud":
        return cls.from_bytes(Path(path).read_bytes())
