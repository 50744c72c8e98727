"""Planar poses, oriented boxes and lane polylines shared across modules."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    w = np.mod(np.asarray(a, float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def rot2(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    heading: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.heading)):
            raise ValueError("pose must be finite")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def to_local(self, pts) -> np.ndarray:
        """World (N, 2) -> this pose's frame."""
        return (np.asarray(pts, float) - self.xy) @ rot2(self.heading)

    def to_world(self, pts) -> np.ndarray:
        return np.asarray(pts, float) @ rot2(self.heading).T + self.xy


@dataclass(frozen=True)
class Box2:
    """Oriented BEV box: center, length along yaw, width across it."""

    cx: float
    cy: float
    length: float
    width: float
    yaw: float

    def corners(self) -> np.ndarray:
        """(4, 2) corners, counter-clockwise."""
        hl, hw = 0.5 * self.length, 0.5 * self.width
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        return local @ rot2(self.yaw).T + np.array([self.cx, self.cy])

    @property
    def area(self) -> float:
        return self.length * self.width

    def contains(self, pts) -> np.ndarray:
        p = (np.atleast_2d(np.asarray(pts, float)) - [self.cx, self.cy]) @ rot2(self.yaw)
        return (np.abs(p[:, 0]) <= 0.5 * self.length) & (np.abs(p[:, 1]) <= 0.5 * self.width)


class Polyline:
    """Lane centerline with arc-length parameterization."""

    def __init__(self, points):
        p = np.asarray(points, float).reshape(-1, 2)
        if len(p) < 2:
            raise ValueError("polyline needs at least two points")
        seg = np.diff(p, axis=0)
        seglen = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seglen <= 0):
            raise ValueError("polyline has repeated points")
        self.points = p
        self.seg = seg
        self.seglen = seglen
        self.s = np.concatenate([[0.0], np.cumsum(seglen)])
        self._inv_len2 = 1.0 / seglen ** 2
        self._seg_heading = np.arctan2(seg[:, 1], seg[:, 0])

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def point_at(self, s) -> np.ndarray:
        """Position at arc length(s); linear extrapolation past either end."""
        s = np.asarray(s, float)
        i = self._segment(s)
        f = (s - self.s[i]) / self.seglen[i]
        return self.points[i] + f[..., None] * self.seg[i]

    def heading_at(self, s) -> np.ndarray:
        i = self._segment(np.asarray(s, float))
        return self._seg_heading[i]

    def _segment(self, s: np.ndarray) -> np.ndarray:
        i = np.searchsorted(self.s, s, side="right") - 1
        return np.minimum(np.maximum(i, 0), len(self.seg) - 1)

    def project(self, pts) -> tuple[np.ndarray, np.ndarray]:
        """Arc length and signed lateral offset (left positive) of the closest point."""
        p = np.atleast_2d(np.asarray(pts, float))
        a = self.points[:-1]
        rx = p[:, 0:1] - a[:, 0]
        ry = p[:, 1:2] - a[:, 1]
        f = (rx * self.seg[:, 0] + ry * self.seg[:, 1]) * self._inv_len2
        # the end segments extend infinitely so points past the ends project linearly
        f[:, 1:] = np.maximum(f[:, 1:], 0.0)
        f[:, :-1] = np.minimum(f[:, :-1], 1.0)
        dx = rx - f * self.seg[:, 0]
        dy = ry - f * self.seg[:, 1]
        d2 = dx * dx + dy * dy
        k = np.argmin(d2, axis=1)
        rows = np.arange(len(p))
        s = self.s[k] + f[rows, k] * self.seglen[k]
        seg = self.seg[k]
        cross = seg[:, 0] * ry[rows, k] - seg[:, 1] * rx[rows, k]
        lat = np.where(cross < 0, -1.0, 1.0) * np.sqrt(d2[rows, k])
        return s, lat
