"""Instance-free objective on rasterized BEV occupancy and flow grids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autonomy.types import Detection


@dataclass(frozen=True)
class GridSpec:
    """Square BEV grid centered on (cx, cy)."""

    cx: float
    cy: float
    size: float = 120.0
    cell: float = 0.5

    @property
    def n(self) -> int:
        return int(round(self.size / self.cell))

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        ax = (np.arange(self.n) + 0.5) * self.cell - 0.5 * self.size
        gx, gy = np.meshgrid(ax + self.cx, ax + self.cy, indexing="ij")
        return gx, gy


def _inside(gx, gy, cx, cy, length, width, yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    dx, dy = gx - cx, gy - cy
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (np.abs(u) <= 0.5 * length) & (np.abs(v) <= 0.5 * width)


def rasterize_boxes(boxes, values, velocities, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Occupancy = max value over covering boxes; flow from the highest-valued covering box."""
    gx, gy = spec.centers()
    occ = np.zeros(gx.shape)
    flow = np.zeros(gx.shape + (2,))
    for b, val, vel in zip(boxes, values, velocities):
        m = _inside(gx, gy, b.cx, b.cy, b.length, b.width, b.yaw) & (val > occ)
        occ[m] = val
        flow[m] = vel
    return occ, flow


def rasterize_outputs(detections: list[Detection], velocities, spec: GridSpec):
    if velocities is None:
        velocities = [np.zeros(2)] * len(detections)
    return rasterize_boxes([d.box() for d in detections], [d.confidence for d in detections],
                           [np.asarray(v, float) for v in velocities], spec)


def soft_iou_loss(o: np.ndarray, o_hat: np.ndarray) -> float:
    o = np.asarray(o, float)
    o_hat = np.asarray(o_hat, float)
    if o.shape != o_hat.shape:
        raise ValueError("occupancy grids differ in shape")
    union = float(np.sum(o + o_hat - o * o_hat))
    if union <= 0.0:
        return 0.0
    return -float(np.sum(o * o_hat)) / union


def epe_loss(f: np.ndarray, f_hat: np.ndarray, o: np.ndarray) -> float:
    f = np.asarray(f, float)
    f_hat = np.asarray(f_hat, float)
    o = np.asarray(o, float)
    if f.shape != f_hat.shape or f.shape[:-1] != o.shape:
        raise ValueError("flow/occupancy grids differ in shape")
    total = float(o.sum())
    if total <= 0.0:
        return 0.0
    return float(np.sum(o * np.linalg.norm(f - f_hat, axis=-1)) / total)
