"""Black-box objective: latent codes -> decoded target shapes -> episode cost."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..autonomy.stack import ReferenceStack
from ..loop.episode import EpisodeConfig, EpisodeTrace, run_episode
from ..shape.basis import ShapeBasis
from ..shape.mesh import MeshError, TriangleMesh
from ..sim.scenario import Scenario
from .search import EvalFailure, EvalOutcome


def trace_digest(trace: EpisodeTrace) -> str:
    h = hashlib.sha256()
    for t in trace.ticks:
        h.update(t.cloud_digest.encode())
    h.update(np.ascontiguousarray(trace.executed).tobytes())
    return h.hexdigest()[:16]


@dataclass
class EpisodeObjective:
    """Episode cost of a scenario with some actors' geometry replaced.

    ``mode`` is "closed" (run_episode) or "open" (the SDV replays its log).
    """

    scenario: Scenario
    targets: list[str]
    mode: str = "closed"
    config: EpisodeConfig = field(default_factory=EpisodeConfig)
    library: object = None
    stack_factory: object = None

    def __post_init__(self):
        if self.mode not in ("open", "closed"):
            raise ValueError(f"mode must be 'open' or 'closed', got {self.mode!r}")
        if self.library is None:
            from ..shape.vehicles import AssetLibrary

            self.library = AssetLibrary.from_env()

    def run(self, overrides: dict[str, TriangleMesh], keep_clouds: bool = False) -> EpisodeTrace:
        stack = (self.stack_factory or ReferenceStack)(self.scenario.sdv.sensor)
        return run_episode(self.scenario, overrides, stack, self.config, self.library,
                           open_loop=self.mode == "open", keep_clouds=keep_clouds)

    def outcome(self, overrides: dict[str, TriangleMesh]) -> EvalOutcome:
        trace = self.run(overrides)
        if trace.aborted:
            raise EvalFailure(f"episode aborted: {trace.error}")
        return EvalOutcome(trace.cost, trace.term_sums(), trace_digest(trace))

    def meshes(self, meshes: list[TriangleMesh]) -> EvalOutcome:
        return self.outcome(dict(zip(self.targets, meshes)))


@dataclass
class LatentObjective:
    """Callable for the optimizer: a point in [0,1]^((K+2)m) -> EvalOutcome."""

    objective: EpisodeObjective
    basis: ShapeBasis

    @property
    def dim(self) -> int:
        return self.basis.code_dim * len(self.objective.targets)

    def decode(self, point) -> dict[str, TriangleMesh]:
        u = np.clip(np.asarray(point, float).reshape(-1), 0.0, 1.0)
        if u.size != self.dim:
            raise ValueError(f"point has {u.size} components, search space has {self.dim}")
        chunks = u.reshape(len(self.objective.targets), self.basis.code_dim)
        try:
            return {aid: self.basis.decode(c) for aid, c in zip(self.objective.targets, chunks)}
        except MeshError as exc:
            raise EvalFailure(str(exc)) from exc

    def __call__(self, point) -> EvalOutcome:
        return self.objective.outcome(self.decode(point))


@dataclass
class AssetObjective:
    """Callable for brute force: an asset id -> EvalOutcome (the same asset on every target)."""

    objective: EpisodeObjective

    def __call__(self, asset_id: str) -> EvalOutcome:
        mesh = self.objective.library.mesh(asset_id)
        return self.objective.outcome({aid: mesh for aid in self.objective.targets})
