"""Black-box search drivers: BO, random, grid, brute force, and the vertex-deformation baseline."""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .gp import GpModel, propose_next

log = logging.getLogger(__name__)

ALGORITHMS = ("bo", "random", "grid", "bruteforce")
TERMS = ("l_det", "l_pred", "c_plan")


class EvalFailure(RuntimeError):
    """An evaluation that produced no usable episode (e.g. an empty decoded shape)."""


@dataclass(frozen=True)
class EvalOutcome:
    cost: float
    terms: dict = field(default_factory=dict)
    digest: str = ""


@dataclass(frozen=True)
class AttackConfig:
    algorithm: str = "bo"
    budget: int = 100
    n_init: int = 11
    beta: float = 1.0
    seed: int = 0
    grid_points: int = 3
    grid_max_dim: int = 5
    failure_cost: float = -100.0
    best_includes_failures: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.algorithm == "bo" and not 1 <= self.n_init <= self.budget:
            raise ValueError("init count must be between 1 and the budget")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class QueryRecord:
    index: int
    point: tuple               # latent components, or (asset id,) for brute force
    cost: float
    failed: bool = False
    terms: tuple = (math.nan, math.nan, math.nan)
    digest: str = ""


@dataclass
class AttackResult:
    config: AttackConfig
    dim: int
    history: list[QueryRecord]

    def _eligible(self) -> list[QueryRecord]:
        if self.config.best_includes_failures:
            return self.history
        return [q for q in self.history if not q.failed]

    @property
    def best(self) -> QueryRecord | None:
        ok = self._eligible()
        return max(ok, key=lambda q: (q.cost, -q.index)) if ok else None

    @property
    def best_cost(self) -> float:
        b = self.best
        return b.cost if b is not None else math.nan

    @property
    def best_point(self):
        b = self.best
        return None if b is None else (b.point[0] if self.config.algorithm == "bruteforce" else np.array(b.point))

    def best_so_far(self) -> np.ndarray:
        """Running maximum of the eligible costs (nan until the first eligible query)."""
        out, cur = [], -math.inf
        for q in self.history:
            if not q.failed or self.config.best_includes_failures:
                cur = max(cur, q.cost)
            out.append(cur if cur > -math.inf else math.nan)
        return np.array(out)


def _record(index: int, point, evaluate: Callable, failure_cost: float) -> QueryRecord:
    try:
        res = evaluate(point)
    except EvalFailure as exc:
        log.info("query %d failed: %s", index, exc)
        pt = tuple(point) if not isinstance(point, str) else (point,)
        return QueryRecord(index, _as_floats(pt), float(failure_cost), True)
    pt = (point,) if isinstance(point, str) else _as_floats(point)
    terms = tuple(float(res.terms.get(k, math.nan)) for k in TERMS)
    return QueryRecord(index, pt, float(res.cost), False, terms, res.digest)


def _as_floats(point) -> tuple:
    return tuple(p if isinstance(p, str) else float(p) for p in point)


def grid_points(dim: int, n: int = 3, max_dim: int = 5) -> np.ndarray:
    """Full lattice of ``n`` points per axis on [0, 1]^dim in lexicographic order."""
    if dim > max_dim:
        raise ValueError(f"grid search refused: {n}^{dim} = {n ** dim} points exceeds the cap "
                         f"({n}^{max_dim}); lower the dimension")
    axis = np.linspace(0.0, 1.0, n)
    return np.array(list(itertools.product(axis, repeat=dim)))


def attack(evaluate: Callable, dim: int, config: AttackConfig, assets: list[str] | None = None,
           checkpoint=None, on_query: Callable | None = None) -> AttackResult:
    """Run one search; ``evaluate`` maps a point (or asset id) to an :class:`EvalOutcome`.

    ``checkpoint`` names a JSON file of completed queries; existing records are
    reused and new ones appended after every query, so an interrupted run
    resumes to the same history.
    """
    if dim < 1:
        raise ValueError("search dimension must be >= 1")
    history: list[QueryRecord] = _load_checkpoint(checkpoint, config, dim)

    def run(index, point):
        if index < len(history):
            return
        rec = _record(index, point, evaluate, config.failure_cost)
        history.append(rec)
        _save_checkpoint(checkpoint, config, dim, history)
        if on_query is not None:
            on_query(rec)

    alg = config.algorithm
    if alg == "bruteforce":
        if not assets:
            raise ValueError("brute force needs a non-empty asset list")
        for i, a in enumerate(assets):
            run(i, a)
    elif alg == "random":
        pts = np.random.default_rng(config.seed).random((config.budget, dim))
        for i, p in enumerate(pts):
            run(i, p)
    elif alg == "grid":
        pts = grid_points(dim, config.grid_points, config.grid_max_dim)
        if config.budget < len(pts):
            # an equal-budget comparison needs a subset; a seeded shuffle keeps it unbiased
            pts = pts[np.random.default_rng(config.seed).permutation(len(pts))[:config.budget]]
        for i, p in enumerate(pts):
            run(i, p)
    else:
        init = qmc.LatinHypercube(dim, seed=config.seed).random(config.n_init)
        for i, p in enumerate(init):
            run(i, p)
        model = GpModel(dim)
        for i in range(config.n_init, config.budget):
            if i < len(history):
                continue
            x = np.array([q.point for q in history])
            y = np.array([q.cost for q in history])
            failed = np.array([q.failed for q in history])
            if failed.any() and not failed.all():
                # the failure cost is a flag, not a measurement; pin it to the worst real cost
                y = np.where(failed, y[~failed].min(), y)
            model.fit(x, y)
            run(i, propose_next(model, config.beta, seed=config.seed * 100003 + i))
    return AttackResult(config, dim, history)


def vertex_deform_attack(evaluate_mesh: Callable, base, bound: float, budget: int, seed: int = 0,
                         failure_cost: float = -100.0) -> tuple[AttackResult, Callable]:
    """Random search over per-vertex deformations of ``base`` within an l-inf ``bound``.

    Query ``i`` uses deltas drawn with seed ``[seed, i]``; returns the result
    and a function rebuilding the mesh of any query index.
    """
    from ..shape.deform import vertex_deform

    def mesh_of(i: int):
        rng = np.random.default_rng([seed, int(i)])
        return vertex_deform(base, rng.uniform(-bound, bound, size=base.vertices.shape), bound)

    cfg = AttackConfig("random", budget, seed=seed, failure_cost=failure_cost)
    history = [_record(i, (float(i),), lambda p: evaluate_mesh(mesh_of(int(p[0]))), failure_cost)
               for i in range(budget)]
    return AttackResult(cfg, 1, history), mesh_of


# ---------------------------------------------------------------- persistence

def config_hash(payload: dict) -> str:
    import hashlib

    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def history_csv(result: AttackResult, cfg_hash: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write(f"# config_hash={cfg_hash} seed={result.config.seed} algorithm={result.config.algorithm} "
              f"dim={result.dim}\n")
    if result.config.algorithm == "bruteforce":
        cols = ["asset"]
    else:
        cols = [f"u{i}" for i in range(result.dim)]
    w.writerow(["query", *cols, "cost", "failed", *TERMS, "best_so_far"])
    for q, b in zip(result.history, result.best_so_far()):
        pt = list(q.point) if result.config.algorithm == "bruteforce" else [repr(float(v)) for v in q.point]
        w.writerow([q.index, *pt, repr(q.cost), int(q.failed), *[repr(t) for t in q.terms], repr(float(b))])
    return buf.getvalue()


def write_history(result: AttackResult, path, cfg_hash: str) -> None:
    Path(path).write_text(history_csv(result, cfg_hash))


def read_history(path) -> tuple[dict, list[dict]]:
    """Header fields and rows of an attack-history CSV."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError(f"{path}: missing attack-history header")
    header = dict(kv.split("=", 1) for kv in lines[0][2:].split())
    rows = list(csv.DictReader(lines[1:]))
    return header, rows


def _load_checkpoint(path, config: AttackConfig, dim: int) -> list[QueryRecord]:
    if path is None or not Path(path).exists():
        return []
    data = json.loads(Path(path).read_text())
    if data.get("config") != config.to_dict() or data.get("dim") != dim:
        raise ValueError(f"checkpoint {path} was written by a different attack configuration")
    return [QueryRecord(r["index"], tuple(r["point"]), r["cost"], r["failed"], tuple(r["terms"]), r["digest"])
            for r in data["history"]]


def _save_checkpoint(path, config: AttackConfig, dim: int, history: list[QueryRecord]) -> None:
    if path is None:
        return
    data = {"config": config.to_dict(), "dim": dim,
            "history": [{"index": q.index, "point": list(q.point), "cost": q.cost, "failed": q.failed,
                         "terms": list(q.terms), "digest": q.digest} for q in history]}
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(data))
    tmp.replace(path)
