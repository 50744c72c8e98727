"""Experiment protocols shared by the command line and the acceptance suite.

An attack condition is (scenario, mode, m, algorithm, seed). The optimized
shapes of any condition are always re-evaluated in closed loop for metrics,
so open- and closed-loop attacks are compared on the same footing.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .loop.episode import EpisodeConfig, EpisodeTrace
from .metrics import ade_metrics, ap_recall, comfort_metrics
from .optim import (AssetObjective, AttackConfig, AttackResult, EpisodeObjective, LatentObjective, attack,
                    select_target_actors, trace_digest)
from .shape.basis import ShapeBasis, fit_library_basis
from .shape.mesh import TriangleMesh
from .sim.scenario import Scenario

log = logging.getLogger(__name__)

BASIS_K = 3
BASIS_RESOLUTION = 48
BASIS_FILE = "basis.bin"

METRIC_FIELDS = ("ap", "recall", "min_ade", "mean_ade", "plan_lat", "plan_jerk", "drive_lat", "drive_jerk",
                 "cost")


def load_or_fit_basis(path=None, library=None, k: int = BASIS_K, resolution: int = BASIS_RESOLUTION) -> ShapeBasis:
    """Read a cached basis when ``path`` exists, otherwise fit one (and cache it if ``path`` is given)."""
    if path is not None and Path(path).exists():
        basis = ShapeBasis.load(path)
        if basis.k == k and basis.resolution == resolution:
            return basis
        log.info("cached basis %s has K=%d R=%d, refitting", path, basis.k, basis.resolution)
    if library is None:
        from .shape.vehicles import AssetLibrary

        library = AssetLibrary.from_env()
    basis = fit_library_basis(library, k, resolution)
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        basis.save(path)
    return basis


# ------------------------------------------------------------------ metrics

def roi_frames(trace: EpisodeTrace) -> list:
    """(detections within the ROI, ROI ground-truth boxes) for every tick."""
    r = trace.config.roi_radius
    out = []
    for t in trace.ticks:
        ex, ey = t.sdv_state[0], t.sdv_state[1]
        dets = [d for d in t.output.detections if math.hypot(d.cx - ex, d.cy - ey) <= r]
        out.append((dets, t.gt_boxes))
    return out


def trace_metrics(traces: list[EpisodeTrace]) -> dict:
    """Pooled metrics over one or more closed-loop traces."""
    frames = [f for tr in traces for f in roi_frames(tr)]
    ap, recall = ap_recall(frames, 0.5)
    min_ade, mean_ade = ade_metrics([p for tr in traces for t in tr.ticks for p in t.forecasts])
    plans = [t.output.plan.states for tr in traces for t in tr.ticks]
    plan_lat, plan_jerk = comfort_metrics(plans, "planned")
    drive = np.array([comfort_metrics(tr.executed, "executed", tr.config.dt) for tr in traces])
    return {"ap": ap, "recall": recall, "min_ade": min_ade, "mean_ade": mean_ade,
            "plan_lat": plan_lat, "plan_jerk": plan_jerk,
            "drive_lat": float(drive[:, 0].mean()), "drive_jerk": float(drive[:, 1].mean()),
            "cost": float(sum(tr.cost for tr in traces))}


# ------------------------------------------------------------------ attacks

@dataclass
class AttackRun:
    """One finished attack: the search result plus what is needed to replay its best query."""

    scenario: Scenario
    targets: list[str]
    mode: str
    result: AttackResult
    latent: LatentObjective | None = None
    assets: AssetObjective | None = None
    extra: dict = field(default_factory=dict)

    def best_overrides(self) -> dict[str, TriangleMesh]:
        best = self.result.best
        if best is None:
            return {}
        if self.assets is not None:
            mesh = self.assets.objective.library.mesh(best.point[0])
            return {aid: mesh for aid in self.targets}
        return self.latent.decode(np.asarray(best.point, float))


def attack_scenario(scenario: Scenario, config: AttackConfig, basis: ShapeBasis | None = None, library=None,
                    mode: str = "closed", m: int = 1, episode: EpisodeConfig | None = None,
                    checkpoint=None, on_query=None) -> AttackRun:
    """Search the target actors' shapes in ``scenario`` with the configured algorithm."""
    targets = select_target_actors(scenario, m)
    objective = EpisodeObjective(scenario, targets, mode, episode or EpisodeConfig(), library)
    if config.algorithm == "bruteforce":
        assets = AssetObjective(objective)
        result = attack(assets, 1, config, assets=objective.library.ids(), checkpoint=checkpoint,
                        on_query=on_query)
        return AttackRun(scenario, targets, mode, result, assets=assets)
    if basis is None:
        raise ValueError("latent-space search needs a shape basis")
    latent = LatentObjective(objective, basis)
    result = attack(latent, latent.dim, config, checkpoint=checkpoint, on_query=on_query)
    return AttackRun(scenario, targets, mode, result, latent=latent)


def closed_loop_trace(scenario: Scenario, overrides: dict, library=None, episode: EpisodeConfig | None = None,
                      keep_clouds: bool = False) -> EpisodeTrace:
    """Closed-loop episode of ``scenario`` with the given shape overrides (used for all metrics)."""
    objective = EpisodeObjective(scenario, sorted(overrides), "closed", episode or EpisodeConfig(), library)
    return objective.run(overrides, keep_clouds=keep_clouds)


def metrics_row(scenario: str, condition: str, trace: EpisodeTrace, seed: int, cfg_hash: str) -> dict:
    row = {"scenario": scenario, "condition": condition, "seed": seed, "config_hash": cfg_hash,
           "trace_digest": trace_digest(trace)}
    row.update(trace_metrics([trace]))
    return row
