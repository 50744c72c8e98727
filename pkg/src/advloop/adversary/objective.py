"""Per-tick adversarial cost: detection, prediction and planning-comfort terms."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..autonomy.plan import comfort_terms
from ..autonomy.types import Detection, TrajPrediction
from ..geometry import Box2
from ..metrics.iou import bev_iou

D_MISS = 5.0


@dataclass(frozen=True)
class CostWeights:
    lambda_pred: float = 0.1
    lambda_plan: float = 0.5
    alpha: float = 1.0
    beta: float = 1.0
    iou_threshold: float = 0.5

    def __post_init__(self):
        if min(self.lambda_pred, self.lambda_plan, self.alpha, self.beta, self.iou_threshold) < 0:
            raise ValueError("cost weights must be non-negative")


PRESETS = {
    "instance": CostWeights(0.1, 0.5),
    "instance_free": CostWeights(1.0, 0.5),
}


@dataclass
class MatchResult:
    tp: list[tuple[str, int, float]] = field(default_factory=list)    # (gt id, detection index, IoU)
    fp: list[tuple[int, float]] = field(default_factory=list)         # (detection index, best IoU)
    fn: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class StepCost:
    l_det: float
    l_pred: float
    c_jerk: float
    c_lat: float
    combined: float

    @property
    def c_plan(self) -> float:
        return self.c_jerk + self.c_lat

    def as_row(self) -> list[float]:
        return [self.l_det, self.l_pred, self.c_jerk, self.c_lat, self.combined]


def match_detections(detections: list[Detection], gts: dict[str, Box2], threshold: float = 0.5) -> MatchResult:
    """Greedy matching in descending confidence; ties keep input order."""
    order = sorted(range(len(detections)), key=lambda i: -detections[i].confidence)
    gt_ids = list(gts)
    ious = np.zeros((len(detections), len(gt_ids)))
    for i, d in enumerate(detections):
        b = d.box()
        for j, g in enumerate(gt_ids):
            ious[i, j] = bev_iou(b, gts[g])
    claimed = set()
    res = MatchResult()
    for i in order:
        best_j, best = -1, -1.0
        for j, g in enumerate(gt_ids):
            if g in claimed:
                continue
            if ious[i, j] >= threshold and ious[i, j] > best:
                best_j, best = j, ious[i, j]
        if best_j >= 0:
            claimed.add(gt_ids[best_j])
            res.tp.append((gt_ids[best_j], i, float(best)))
        else:
            res.fp.append((i, float(ious[i].max()) if len(gt_ids) else 0.0))
    res.fn = [g for g in gt_ids if g not in claimed]
    return res


def detection_loss(match: MatchResult, detections: list[Detection], alpha: float = 1.0, beta: float = 1.0) -> float:
    tp = sum(iou * detections[i].confidence for _, i, iou in match.tp)
    fp = sum((1.0 - iou) * detections[i].confidence for i, iou in match.fp)
    return -alpha * tp + beta * fp


def match_predictions(predictions: list[TrajPrediction], centers: dict[str, np.ndarray],
                      gate: float = 3.0) -> dict[str, TrajPrediction]:
    """Assign each actor the prediction whose origin is nearest (greedy, within ``gate``)."""
    pairs = []
    for pi, p in enumerate(predictions):
        for g, c in centers.items():
            d = float(np.hypot(*(p.origin - c)))
            if d <= gate:
                pairs.append((d, pi, g))
    pairs.sort(key=lambda t: (t[0], t[1], t[2]))
    used_p, out = set(), {}
    for _, pi, g in pairs:
        if pi in used_p or g in out:
            continue
        used_p.add(pi)
        out[g] = predictions[pi]
    return out


def ade(pred_modes: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-mode mean L2 displacement over waypoints, shape (K,)."""
    h = min(pred_modes.shape[1], len(gt))
    return np.linalg.norm(pred_modes[:, :h] - gt[None, :h], axis=-1).mean(axis=1)


def prediction_loss(assigned: dict[str, TrajPrediction], gt_futures: dict[str, np.ndarray],
                    roi_ids, d_miss: float = D_MISS) -> float:
    """Mean over ROI actors of the mode-averaged ADE; unpredicted actors cost ``d_miss``."""
    vals = []
    for g in roi_ids:
        p = assigned.get(g)
        vals.append(float(ade(p.modes, gt_futures[g]).mean()) if p is not None else d_miss)
    return float(np.mean(vals)) if vals else 0.0


def comfort_cost(states: np.ndarray, dt: float = 0.1) -> tuple[float, float]:
    """(mean |jerk|, mean |v^2 kappa|) of a state sequence."""
    states = np.asarray(states, float)
    if len(states) < 4:
        raise ValueError("comfort cost needs at least 4 states")
    jerk, lat = comfort_terms(states, dt)
    return float(np.abs(jerk).mean()), float(np.abs(lat).mean())


def combined_step_cost(l_det: float, l_pred: float, c_plan: float, weights: CostWeights) -> float:
    return l_det + weights.lambda_pred * l_pred + weights.lambda_plan * c_plan


def make_step_cost(l_det: float, l_pred: float, c_jerk: float, c_lat: float, weights: CostWeights) -> StepCost:
    return StepCost(l_det, l_pred, c_jerk, c_lat, combined_step_cost(l_det, l_pred, c_jerk + c_lat, weights))


def episode_cost(costs) -> float:
    """Plain sum of the per-tick combined costs."""
    return float(sum(c.combined for c in costs))


def write_step_costs(costs: list[StepCost], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tick", "l_det", "l_pred", "c_jerk", "c_lat", "C_t"])
        for t, c in enumerate(costs):
            w.writerow([t] + [repr(float(v)) for v in c.as_row()])


def read_step_costs(path) -> list[StepCost]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [StepCost(float(r["l_det"]), float(r["l_pred"]), float(r["c_jerk"]), float(r["c_lat"]), float(r["C_t"]))
            for r in rows]
