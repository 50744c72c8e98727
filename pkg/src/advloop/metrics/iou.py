"""Oriented BEV box overlap via convex polygon clipping."""
from __future__ import annotations

import numpy as np

from ..geometry import Box2


def polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman: ``subject`` clipped by convex CCW polygon ``clip``."""
    out = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not out:
            break
        a, b = clip[i], clip[(i + 1) % n]
        ex, ey = b[0] - a[0], b[1] - a[1]

        def side(p):
            return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

        inp, out = out, []
        prev = inp[-1]
        sp = side(prev)
        for cur in inp:
            sc = side(cur)
            if sc >= 0:
                if sp < 0:
                    out.append(_cross_point(prev, cur, sp, sc))
                out.append(cur)
            elif sp >= 0:
                out.append(_cross_point(prev, cur, sp, sc))
            prev, sp = cur, sc
    return np.array(out, dtype=float).reshape(-1, 2)


def _cross_point(p, q, sp, sq):
    f = sp / (sp - sq)
    return (p[0] + f * (q[0] - p[0]), p[1] + f * (q[1] - p[1]))


def intersection_area(a: Box2, b: Box2) -> float:
    # cheap reject on circumscribed circles
    ra = 0.5 * np.hypot(a.length, a.width)
    rb = 0.5 * np.hypot(b.length, b.width)
    if (a.cx - b.cx) ** 2 + (a.cy - b.cy) ** 2 > (ra + rb) ** 2:
        return 0.0
    return max(polygon_area(clip_convex(a.corners(), b.corners())), 0.0)


def bev_iou(a: Box2, b: Box2) -> float:
    if min(a.length, a.width, b.length, b.width) <= 0:
        raise ValueError("boxes must have positive extents")
    if a == b:
        return 1.0
    inter = intersection_area(a, b)
    if inter <= 0.0:
        return 0.0
    return min(1.0, inter / (a.area + b.area - inter))


def iou_matrix(dets, gts) -> np.ndarray:
    out = np.zeros((len(dets), len(gts)))
    for i, d in enumerate(dets):
        for j, g in enumerate(gts):
            out[i, j] = bev_iou(d, g)
    return out


def boxes_overlap(a: Box2, b: Box2) -> bool:
    return intersection_area(a, b) > 1e-9
