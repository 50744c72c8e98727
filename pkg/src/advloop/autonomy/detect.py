"""Geometric LiDAR detector: ground removal, BEV clustering, box fitting."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .. import kernels
from ..sim.sensor import PointCloud
from .types import Detection


@dataclass(frozen=True)
class DetectorConfig:
    sensor_height: float = 1.9      # ground plane sits at z = -sensor_height in the sensor frame
    ground_threshold: float = 0.3
    cell: float = 0.2
    n_sat: int = 150
    n_min: int = 8
    max_extent: float = 15.0        # larger clusters are treated as structure, not vehicles
    max_range: float = 80.0
    min_length: float = 4.0         # amodal completion of partially seen vehicles
    min_width: float = 1.7
    merge_fragments: bool = True    # join clusters whose completed boxes overlap
    link_cells: int = 5             # cells within this Chebyshev distance are connected (1 = 8-connected)


def _neighbours(reach: int) -> list[tuple[int, int]]:
    """Half of the (2 reach + 1)^2 - 1 offsets; links are undirected so the mirror is implied."""
    return [(di, dj) for di in range(0, reach + 1) for dj in range(-reach, reach + 1) if di > 0 or dj > 0]


def cluster_cells(ij: np.ndarray, reach: int = 1) -> np.ndarray:
    """Connected component label for every occupied cell row of ``ij`` (unique rows).

    Cells are linked when their Chebyshev distance is at most ``reach``; the
    default of 1 is plain 8-connectivity.
    """
    if reach < 1:
        raise ValueError("reach must be >= 1")
    n = len(ij)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    base = ij.min(axis=0) - 1
    rel = ij - base
    rel = rel + reach
    span = int(rel[:, 1].max()) + reach + 1
    key = rel[:, 0] * span + rel[:, 1]
    order = np.argsort(key)
    sk = key[order]
    rows, cols = [], []
    for di, dj in _neighbours(reach):
        nk = key + di * span + dj
        pos = np.clip(np.searchsorted(sk, nk), 0, n - 1)
        hit = sk[pos] == nk
        rows.append(np.flatnonzero(hit))
        cols.append(order[pos[hit]])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    graph = coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return labels


def min_area_rect(xy: np.ndarray) -> tuple[float, float, float, float, float]:
    """Minimum-area enclosing rectangle (cx, cy, extent_a, extent_b, angle of axis a).

    Candidate orientations are the convex hull edge directions.
    """
    return kernels.min_area_rect(np.ascontiguousarray(xy, dtype=np.float64))


def _perimeter_coverage(local: np.ndarray, ext_u: float, ext_v: float, cell: float) -> float:
    nu = max(1, int(math.ceil(ext_u / cell - 1e-9)))
    nv = max(1, int(math.ceil(ext_v / cell - 1e-9)))
    iu = np.clip(np.floor((local[:, 0] + 0.5 * ext_u) / cell).astype(int), 0, nu - 1)
    iv = np.clip(np.floor((local[:, 1] + 0.5 * ext_v) / cell).astype(int), 0, nv - 1)
    border = (iu == 0) | (iu == nu - 1) | (iv == 0) | (iv == nv - 1)
    occupied = len(np.unique(iu[border] * nv + iv[border]))
    n_border = nu * nv - max(nu - 2, 0) * max(nv - 2, 0)
    return occupied / n_border


def fit_box(xy: np.ndarray, cfg: DetectorConfig, complete: bool = True) -> Detection:
    """Oriented box for one cluster (sensor frame), with amodal completion."""
    cx, cy, ea, eb, a = min_area_rect(xy)
    if max(ea, eb) < 2.0 * cfg.cell:
        # a cluster this small has no usable orientation; assume the sensor's axes
        lo, hi = xy.min(axis=0), xy.max(axis=0)
        cx, cy = 0.5 * (lo + hi)
        ea, eb = hi - lo
        a = 0.0
    # length axis: the rectangle axis closer to the sensor's forward axis
    if abs(math.cos(a)) >= abs(math.sin(a)):
        length, width, yaw = ea, eb, a
    else:
        length, width, yaw = eb, ea, a + 0.5 * math.pi
    yaw = math.atan2(math.sin(yaw), math.cos(yaw))
    if yaw > 0.5 * math.pi:
        yaw -= math.pi
    elif yaw <= -0.5 * math.pi:
        yaw += math.pi
    c, s = math.cos(yaw), math.sin(yaw)
    rel = xy - [cx, cy]
    local = np.stack([rel[:, 0] * c + rel[:, 1] * s, -rel[:, 0] * s + rel[:, 1] * c], axis=1)
    coverage = _perimeter_coverage(local, length, width, cfg.cell)
    conf = min(1.0, len(xy) / cfg.n_sat) * coverage
    if complete:
        # the visible faces are the ones nearest the sensor, so grow away from it
        du = max(cfg.min_length - length, 0.0)
        dv = max(cfg.min_width - width, 0.0)
        su = 1.0 if cx * c + cy * s >= 0 else -1.0
        sv = 1.0 if -cx * s + cy * c >= 0 else -1.0
        cx += 0.5 * (su * du * c - sv * dv * s)
        cy += 0.5 * (su * du * s + sv * dv * c)
        length += du
        width += dv
    length = max(length, 1e-3)
    width = max(width, 1e-3)
    if width > length:
        length, width = width, length
        yaw = yaw + 0.5 * math.pi if yaw <= 0 else yaw - 0.5 * math.pi
    return Detection(float(cx), float(cy), float(length), float(width), float(yaw),
                     float(min(max(conf, 0.0), 1.0)), int(len(xy)))


def detect(cloud: PointCloud, cfg: DetectorConfig = DetectorConfig()) -> list[Detection]:
    """Boxes in the sensor frame, sorted by descending confidence."""
    if len(cloud) == 0:
        return []
    p = cloud.points
    keep = p[:, 2] >= -cfg.sensor_height + cfg.ground_threshold
    keep &= np.hypot(p[:, 0], p[:, 1]) <= cfg.max_range
    xy = p[keep, :2]
    if len(xy) < cfg.n_min:
        return []
    ij = np.floor(xy / cfg.cell).astype(np.int64)
    cells, inv = np.unique(ij, axis=0, return_inverse=True)
    labels = cluster_cells(cells, cfg.link_cells)[inv.reshape(-1)]
    clusters = [xy[labels == lab] for lab in np.unique(labels)]
    clusters = [c for c in clusters if np.hypot(*(c.max(axis=0) - c.min(axis=0))) <= cfg.max_extent]
    if cfg.merge_fragments:
        clusters, fitted = merge_fragments(clusters, cfg)
    else:
        fitted = [fit_box(c, cfg) for c in clusters]
    out = [d for c, d in zip(clusters, fitted) if len(c) >= cfg.n_min]
    out.sort(key=lambda d: (-d.confidence, d.cx, d.cy))
    return out


def merge_fragments(clusters: list[np.ndarray], cfg: DetectorConfig) -> tuple[list[np.ndarray], list[Detection]]:
    """Union clusters whose amodally completed boxes intersect, until none do.

    Returns the merged clusters and their fitted detections.

    A sparse scan often splits one vehicle into a rear-face cluster and a roof
    cluster; completion of the near fragment covers the far one.
    """
    from ..metrics.iou import intersection_area

    clusters = sorted(clusters, key=lambda c: (float(np.hypot(*c.mean(axis=0))), float(c[0, 0])))
    dets = [fit_box(c, cfg) for c in clusters]
    boxes = [d.box() for d in dets]
    if len(clusters) < 2:
        return clusters, dets
    # axis-aligned bounds of each completed box, to skip pairs that cannot touch
    bounds = np.array([[*b.corners().min(axis=0), *b.corners().max(axis=0)] for b in boxes])
    alive = np.ones(len(clusters), dtype=bool)
    changed = True
    while changed:
        changed = False
        for i in range(len(clusters)):
            if not alive[i]:
                continue
            grown = True
            while grown:
                grown = False
                b = bounds[i]
                cand = np.flatnonzero(alive & (bounds[:, 0] <= b[2]) & (bounds[:, 2] >= b[0])
                                      & (bounds[:, 1] <= b[3]) & (bounds[:, 3] >= b[1]))
                for j in cand[cand > i]:
                    if intersection_area(boxes[i], boxes[j]) <= 0.0:
                        continue
                    merged = np.concatenate([clusters[i], clusters[j]])
                    ext = merged.max(axis=0) - merged.min(axis=0)
                    if np.hypot(*ext) > cfg.max_extent:
                        continue
                    clusters[i] = merged
                    dets[i] = fit_box(merged, cfg)
                    boxes[i] = dets[i].box()
                    corners = boxes[i].corners()
                    bounds[i] = [*corners.min(axis=0), *corners.max(axis=0)]
                    alive[j] = False
                    grown = changed = True
                    break
    keep = np.flatnonzero(alive)
    return [clusters[k] for k in keep], [dets[k] for k in keep]
