"""Detection AP / recall with all-points interpolation over pooled frames."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..autonomy.types import Detection
from ..geometry import Box2


@dataclass(frozen=True)
class PrPoint:
    confidence: float
    precision: float
    recall: float

    def __post_init__(self):
        if not (0.0 <= self.precision <= 1.0 and 0.0 <= self.recall <= 1.0):
            raise ValueError("precision and recall must lie in [0, 1]")


Frame = tuple[Sequence[Detection], dict[str, Box2]]


def match_frames(frames: Sequence[Frame], iou: float = 0.5) -> tuple[np.ndarray, np.ndarray, int]:
    """Greedy per-frame matching; returns (confidences, tp flags, number of gts) pooled over frames."""
    from ..adversary.objective import match_detections

    conf, flags, n_gt = [], [], 0
    for dets, gts in frames:
        n_gt += len(gts)
        if not dets:
            continue
        m = match_detections(list(dets), gts, iou)
        tp = np.zeros(len(dets), dtype=bool)
        tp[[i for _, i, _ in m.tp]] = True
        conf.extend(d.confidence for d in dets)
        flags.extend(tp.tolist())
    return np.asarray(conf, float), np.asarray(flags, bool), n_gt


def pr_curve(confidences, is_tp, n_gt: int) -> list[PrPoint]:
    """Precision/recall after each detection in descending confidence (stable for ties)."""
    if n_gt <= 0:
        raise ValueError("PR curve is undefined without ground truth")
    c = np.asarray(confidences, float)
    t = np.asarray(is_tp, bool)
    order = np.argsort(-c, kind="stable")
    tp = np.cumsum(t[order])
    k = np.arange(1, len(order) + 1)
    return [PrPoint(float(c[o]), float(p), float(r)) for o, p, r in zip(order, tp / k, tp / n_gt)]


def average_precision(confidences, is_tp, n_gt: int) -> float:
    """Area under the monotone precision envelope (all-points interpolation)."""
    curve = pr_curve(confidences, is_tp, n_gt)
    if not curve:
        return 0.0
    prec = np.array([p.precision for p in curve])
    rec = np.array([p.recall for p in curve])
    env = np.maximum.accumulate(prec[::-1])[::-1]
    steps = np.diff(np.concatenate([[0.0], rec]))
    return float(np.sum(steps * env))


def ap_recall(frames: Sequence[Frame], iou: float = 0.5,
              recall_threshold: float = 0.0) -> tuple[float | None, float | None]:
    """(AP, Recall) over pooled frames; both ``None`` when there is no ground truth.

    Recall counts true positives whose confidence is at least ``recall_threshold``.
    """
    conf, flags, n_gt = match_frames(frames, iou)
    if n_gt == 0:
        return None, None
    ap = average_precision(conf, flags, n_gt)
    recall = float(np.sum(flags & (conf >= recall_threshold)) / n_gt)
    return ap, recall
