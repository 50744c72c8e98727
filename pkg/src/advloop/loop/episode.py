"""Sense -> autonomy -> execute -> advance loop, open- and closed-loop."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from ..adversary.grids import GridSpec, epe_loss, rasterize_boxes, rasterize_outputs, soft_iou_loss
from ..adversary.objective import (D_MISS, CostWeights, StepCost, comfort_cost, detection_loss,
                                   episode_cost, make_step_cost, match_detections, match_predictions,
                                   prediction_loss)
from ..autonomy.types import ACCEL, CURV, HEADING, SPEED, STATE_DIM, X, Y, AutonomyOutput
from ..geometry import Box2, Pose2
from ..shape.mesh import TriangleMesh
from ..sim.scenario import ActorState, Scenario, ScenarioSnapshot
from ..sim.scene import SensorPose, assemble_scene, raycast
from ..sim.sensor import PointCloud
from .idm import IdmParams, ReactiveActor, leader_gap, reactive_actor_step

PRED_DT = 0.5
PRED_HORIZON = 6.0


class EpisodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class EpisodeConfig:
    duration: float = 5.0
    rate: float = 10.0
    roi_radius: float = 60.0
    actor_mode: str = "reactive"        # "replay" forces every actor onto its log
    seed: int = 0
    objective: str = "instance"         # or "instance_free"
    weights: CostWeights = field(default_factory=CostWeights)
    d_miss: float = D_MISS
    grid_cell: float = 0.5

    def __post_init__(self):
        if not self.duration > 0 or not self.rate > 0:
            raise ValueError("duration and rate must be positive")
        if self.actor_mode not in ("replay", "reactive"):
            raise ValueError(f"unknown actor mode {self.actor_mode!r}")
        if self.objective not in ("instance", "instance_free"):
            raise ValueError(f"unknown objective {self.objective!r}")

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration * self.rate)) + 1

    @property
    def dt(self) -> float:
        return 1.0 / self.rate


@dataclass(eq=False)
class TickRecord:
    time: float
    snapshot: ScenarioSnapshot
    cloud_digest: str
    output: AutonomyOutput
    sdv_state: np.ndarray
    gt_boxes: dict[str, Box2]
    cost: StepCost | None = None
    cloud: PointCloud | None = None
    forecasts: list = field(default_factory=list)     # (modes (K,H,2), gt future (H,2)) per predicted ROI actor


@dataclass(eq=False)
class EpisodeTrace:
    scenario: str
    mode: str                       # "closed" | "open"
    config: EpisodeConfig
    ticks: list[TickRecord]
    executed: np.ndarray            # (N, STATE_DIM)
    overrides: tuple[str, ...] = ()
    aborted: bool = False
    error: str = ""

    @property
    def step_costs(self) -> list[StepCost]:
        return [t.cost for t in self.ticks if t.cost is not None]

    @property
    def cost(self) -> float:
        return episode_cost(self.step_costs)

    def term_sums(self) -> dict[str, float]:
        c = self.step_costs
        return {"l_det": float(sum(s.l_det for s in c)), "l_pred": float(sum(s.l_pred for s in c)),
                "c_plan": float(sum(s.c_plan for s in c))}


def cloud_digest(cloud: PointCloud) -> str:
    return hashlib.sha256(cloud.to_bytes()).hexdigest()


@dataclass(frozen=True, eq=False)
class ActorGeometry:
    mesh: TriangleMesh
    dims: tuple[float, float, float]
    center: np.ndarray              # bbox center offset (x, y) in the canonical frame


def resolve_geometry(scenario: Scenario, overrides: dict | None, library) -> dict[str, ActorGeometry]:
    overrides = dict(overrides or {})
    unknown = set(overrides) - {a.id for a in scenario.actors}
    if unknown:
        raise KeyError(f"override for unknown actor(s): {sorted(unknown)}")
    out = {}
    for a in scenario.actors:
        if a.id in overrides:
            mesh = overrides[a.id]
        elif a.asset:
            mesh = library.mesh(a.asset)
        else:
            mesh = library.fitted_mesh(a.cls, a.dims)
        lo, hi = mesh.bounds()
        ext = hi - lo
        out[a.id] = ActorGeometry(mesh, (float(ext[0]), float(ext[1]), float(ext[2])), 0.5 * (lo + hi)[:2])
    return out


def log_states(log: np.ndarray, dt: float) -> np.ndarray:
    """Logged (t, x, y, heading, speed) rows -> state rows with accel and curvature."""
    n = len(log)
    st = np.zeros((n, STATE_DIM))
    st[:, X], st[:, Y], st[:, HEADING], st[:, SPEED] = log[:, 1], log[:, 2], log[:, 3], log[:, 4]
    if n > 1:
        acc = np.diff(log[:, 4]) / dt
        st[:-1, ACCEL] = acc
        st[-1, ACCEL] = acc[-1]
        dh = np.arctan2(np.sin(np.diff(log[:, 3])), np.cos(np.diff(log[:, 3])))
        ds = log[:-1, 4] * dt
        kappa = np.where(ds > 1e-9, dh / np.where(ds > 1e-9, ds, 1.0), 0.0)
        st[:-1, CURV] = kappa
        st[-1, CURV] = kappa[-1]
    return st


class _ActorSim:
    """Actor positions for the episode plus a post-roll for ground-truth futures."""

    def __init__(self, scenario: Scenario, geometry: dict[str, ActorGeometry], mode: str, v0: float):
        self.scenario = scenario
        self.lane_map = scenario.lane_map
        self.params = IdmParams(v0=v0)
        self.k = 0
        self.reactive: dict[str, ReactiveActor] = {}
        for a in scenario.actors:
            if mode == "reactive" and a.mode == "reactive":
                s0 = a.state_at(0)
                lane, s, off = self.lane_map.nearest_lane(s0.pose.xy[None])
                self.reactive[a.id] = ReactiveActor(lane, s, off, s0.speed, geometry[a.id].dims[0])
        self.geometry = geometry

    def states(self) -> list[ActorState]:
        out = []
        for a in self.scenario.actors:
            g = self.geometry[a.id]
            if a.id in self.reactive:
                r = self.reactive[a.id]
                out.append(ActorState(a.id, a.cls, r.pose(self.lane_map), r.speed, g.dims, a.asset))
            else:
                s = a.state_at(self.k)
                out.append(ActorState(a.id, a.cls, s.pose, s.speed, g.dims, a.asset))
        return out

    def advance(self, sdv_xyvl: tuple[float, float, float, float], dt: float) -> None:
        cur = {s.id: s for s in self.states()}
        new = {}
        for aid, r in self.reactive.items():
            others = [(s.pose.x, s.pose.y, s.speed, s.dims[0]) for i, s in cur.items() if i != aid]
            others.append(sdv_xyvl)
            gap, v_lead = leader_gap(r, others, self.lane_map)
            new[aid] = reactive_actor_step(r, gap, v_lead, dt, self.params)
        self.reactive.update(new)
        self.k += 1


def gt_box(state: ActorState, geom: ActorGeometry) -> Box2:
    c, s = math.cos(state.pose.heading), math.sin(state.pose.heading)
    ox, oy = geom.center
    return Box2(state.pose.x + c * ox - s * oy, state.pose.y + s * ox + c * oy,
                geom.dims[0], geom.dims[1], state.pose.heading)


def run_episode(scenario: Scenario, overrides: dict | None, autonomy, config: EpisodeConfig = EpisodeConfig(),
                library=None, open_loop: bool = False, keep_clouds: bool = False) -> EpisodeTrace:
    """Simulate one episode and cost every tick."""
    if library is None:
        from ..shape.vehicles import AssetLibrary

        library = AssetLibrary.from_env()
    if abs(config.dt - scenario.dt) > 1e-12:
        raise EpisodeError(f"control period {config.dt} does not match scenario sampling {scenario.dt}")
    logged = None
    if open_loop:
        if scenario.sdv.log is None:
            raise EpisodeError(f"{scenario.name}: open-loop replay needs a logged SDV trajectory")
        logged = log_states(scenario.sdv.log, scenario.dt)
    geometry = resolve_geometry(scenario, overrides, library)
    meshes = {k: g.mesh for k, g in geometry.items()}
    sensor = scenario.sdv.sensor
    actors = _ActorSim(scenario, geometry, config.actor_mode, scenario.lane_map.speed_limit)
    autonomy.reset()
    sdv = np.zeros(STATE_DIM)
    sdv[:4] = scenario.sdv.initial
    if logged is not None:
        sdv = logged[0].copy()
    sdv_len = scenario.sdv.dims[0]
    ticks: list[TickRecord] = []
    positions: list[dict[str, np.ndarray]] = []
    executed = []
    aborted, error = False, ""
    n = config.n_ticks
    for k in range(n):
        t = k * config.dt
        states = actors.states()
        snap = ScenarioSnapshot(t, tuple(states), scenario.lane_map)
        scene = assemble_scene(snap, meshes=meshes)
        pose = SensorPose.on_vehicle(sdv[X], sdv[Y], sdv[HEADING], sensor)
        cloud = raycast(scene, pose, sensor, seed=[config.seed, k])
        try:
            out = autonomy.step(cloud, sdv.copy(), scenario.lane_map, t)
        except Exception as exc:  # plug-in stacks may fail arbitrarily
            aborted, error = True, f"tick {k}: {type(exc).__name__}: {exc}"
            break
        ego = np.hypot([s.pose.x - sdv[X] for s in states], [s.pose.y - sdv[Y] for s in states])
        gts = {s.id: gt_box(s, geometry[s.id]) for s, d in zip(states, ego) if d <= config.roi_radius}
        if logged is not None:
            row = logged[min(k, len(logged) - 1)].copy()
        else:
            row = out.plan.states[0].copy()
        executed.append(row)
        ticks.append(TickRecord(t, snap, cloud_digest(cloud), out, row, gts,
                                cloud=cloud if keep_clouds else None))
        positions.append({s.id: gt_box(s, geometry[s.id]) for s in states})
        if k == n - 1:
            break
        actors.advance((sdv[X], sdv[Y], sdv[SPEED], sdv_len), config.dt)
        if logged is not None:
            sdv = logged[min(k + 1, len(logged) - 1)].copy()
        else:
            if out.plan.dt != config.dt:
                raise EpisodeError("plan sampling must equal the control period")
            sdv = out.plan.states[1].copy()
    trace = EpisodeTrace(scenario.name, "open" if open_loop else "closed", config, ticks,
                         np.array(executed).reshape(-1, STATE_DIM), tuple(sorted(overrides or {})),
                         aborted, error)
    if not aborted:
        # ground-truth futures need the actors beyond the episode end
        post = int(round(PRED_HORIZON / config.dt))
        for j in range(post):
            if logged is not None and n + j < len(logged):
                sx, sy, sv = logged[n + j, X], logged[n + j, Y], logged[n + j, SPEED]
            else:
                dtj = (j + 1) * config.dt
                sx = sdv[X] + math.cos(sdv[HEADING]) * sdv[SPEED] * dtj
                sy = sdv[Y] + math.sin(sdv[HEADING]) * sdv[SPEED] * dtj
                sv = sdv[SPEED]
            actors.advance((sx, sy, sv, sdv_len), config.dt)
            positions.append({s.id: gt_box(s, geometry[s.id]) for s in actors.states()})
        cost_ticks(trace, positions, config)
    return trace


def cost_ticks(trace: EpisodeTrace, positions: list[dict[str, Box2]], config: EpisodeConfig) -> None:
    """Attach a StepCost to every tick (needs actor boxes up to the prediction horizon)."""
    w = config.weights
    stride = int(round(PRED_DT / config.dt))
    h = int(round(PRED_HORIZON / PRED_DT))
    for k, tick in enumerate(trace.ticks):
        ego = tick.sdv_state[:2]
        dets = [d for d in tick.output.detections if math.hypot(d.cx - ego[0], d.cy - ego[1]) <= config.roi_radius]
        roi = list(tick.gt_boxes)
        c_jerk, c_lat = comfort_cost(tick.output.plan.states, tick.output.plan.dt)
        futures = {}
        for g in roi:
            idx = [min(k + stride * (i + 1), len(positions) - 1) for i in range(h)]
            futures[g] = np.array([[positions[i][g].cx, positions[i][g].cy] for i in idx])
        centers = {g: np.array([tick.gt_boxes[g].cx, tick.gt_boxes[g].cy]) for g in roi}
        assigned = match_predictions(list(tick.output.predictions), centers)
        tick.forecasts = [(assigned[g].modes, futures[g]) for g in roi if g in assigned]
        if config.objective == "instance":
            match = match_detections(dets, tick.gt_boxes, w.iou_threshold)
            l_det = detection_loss(match, dets, w.alpha, w.beta)
            l_pred = prediction_loss(assigned, futures, roi, config.d_miss)
        else:
            l_det, l_pred = _instance_free_terms(tick, dets, positions, k, config)
        tick.cost = make_step_cost(l_det, l_pred, c_jerk, c_lat, w)


def _instance_free_terms(tick: TickRecord, dets, positions, k: int, config: EpisodeConfig):
    ego = tick.sdv_state
    spec = GridSpec(float(ego[X]), float(ego[Y]), 2.0 * config.roi_radius, config.grid_cell)
    roi = list(tick.gt_boxes)
    nxt = positions[min(k + 1, len(positions) - 1)]
    gt_vel = [np.array([nxt[g].cx - tick.gt_boxes[g].cx, nxt[g].cy - tick.gt_boxes[g].cy]) / config.dt
              for g in roi]
    o, f = rasterize_boxes([tick.gt_boxes[g] for g in roi], [1.0] * len(roi), gt_vel, spec)
    vel = []
    for d in dets:
        v = np.zeros(2)
        for p in tick.output.predictions:
            if abs(p.origin[0] - d.cx) < 1e-9 and abs(p.origin[1] - d.cy) < 1e-9:
                v = (p.modes[0, 0] - p.origin) / p.dt
                break
        vel.append(v)
    o_hat, f_hat = rasterize_outputs(dets, vel, spec)
    return soft_iou_loss(o, o_hat), epe_loss(f, f_hat, o)


def run_open_loop(scenario: Scenario, overrides: dict | None, autonomy, config: EpisodeConfig = EpisodeConfig(),
                  library=None, keep_clouds: bool = False) -> EpisodeTrace:
    """SDV replays its log; autonomy outputs are recorded but never executed."""
    return run_episode(scenario, overrides, autonomy, config, library, open_loop=True, keep_clouds=keep_clouds)
