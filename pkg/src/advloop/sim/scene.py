"""Scene assembly and primary LiDAR raycasting.

A scene is a flat list of mesh instances (rigid yaw + translation of a
canonical mesh) plus the ground. Each canonical mesh carries its own BVH, so
replacing one actor's geometry never touches the others. Rays are moved into
each instance's local frame; rotation preserves length, so hit distances are
the same in both frames.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..shape.mesh import TriangleMesh
from .bvh import Bvh, mesh_bvh
from .scenario import ScenarioSnapshot
from .sensor import PointCloud, SensorConfig

BACKGROUND = "background"
GROUND_HALF_SIZE = 2000.0


@dataclass(frozen=True, eq=False)
class Instance:
    owner: str                 # actor id or BACKGROUND
    mesh: TriangleMesh
    bvh: Bvh
    yaw: float
    translation: np.ndarray    # (3,)
    lo: np.ndarray             # world AABB
    hi: np.ndarray

    def world_vertices(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        v = self.mesh.vertices
        x = c * v[:, 0] - s * v[:, 1] + self.translation[0]
        y = s * v[:, 0] + c * v[:, 1] + self.translation[1]
        return np.stack([x, y, v[:, 2] + self.translation[2]], axis=1)


@dataclass(frozen=True, eq=False)
class Scene:
    instances: tuple[Instance, ...]

    def owners(self) -> list[str]:
        return [inst.owner for inst in self.instances]

    def world_triangles(self) -> tuple[np.ndarray, np.ndarray]:
        """All triangles in world coordinates with their owner (provenance)."""
        tris, owners = [], []
        for inst in self.instances:
            tris.append(inst.world_vertices()[inst.mesh.triangles])
            owners.extend([inst.owner] * inst.mesh.n_triangles)
        return np.concatenate(tris), np.array(owners)

    def packed(self) -> tuple:
        """Instance transforms and concatenated BVH arrays for the scene kernel (cached)."""
        cached = self.__dict__.get("_packed")
        if cached is not None:
            return cached
        insts = self.instances
        bvhs = [inst.bvh for inst in insts]
        i32 = np.int32
        node_off = np.cumsum([0] + [b.n_nodes for b in bvhs[:-1]]).astype(i32)
        tri_off = np.cumsum([0] + [len(b.tris) for b in bvhs[:-1]]).astype(i32)
        packed = (
            np.array([math.cos(i.yaw) for i in insts]), np.array([math.sin(i.yaw) for i in insts]),
            np.ascontiguousarray([i.translation for i in insts], dtype=float).reshape(-1, 3),
            np.ascontiguousarray([i.lo for i in insts], dtype=float).reshape(-1, 3),
            np.ascontiguousarray([i.hi for i in insts], dtype=float).reshape(-1, 3),
            node_off, tri_off,
            np.ascontiguousarray(np.concatenate([b.tris for b in bvhs])),
            np.ascontiguousarray(np.concatenate([b.lo for b in bvhs])),
            np.ascontiguousarray(np.concatenate([b.hi for b in bvhs])),
            np.concatenate([b.left for b in bvhs]).astype(i32),
            np.concatenate([b.right for b in bvhs]).astype(i32),
            np.concatenate([b.start for b in bvhs]).astype(i32),
            np.concatenate([b.count for b in bvhs]).astype(i32),
        )
        object.__setattr__(self, "_packed", packed)
        return packed

    def instance(self, owner: str) -> Instance:
        for inst in self.instances:
            if inst.owner == owner:
                return inst
        raise KeyError(owner)


def ground_mesh(center=(0.0, 0.0), half: float = GROUND_HALF_SIZE) -> TriangleMesh:
    cx, cy = center
    v = np.array([[cx - half, cy - half, 0.0], [cx + half, cy - half, 0.0],
                  [cx + half, cy + half, 0.0], [cx - half, cy + half, 0.0]])
    return TriangleMesh(v, np.array([[0, 1, 2], [0, 2, 3]]))


def make_instance(owner: str, mesh: TriangleMesh, x: float, y: float, yaw: float, lift: bool = True) -> Instance:
    """Place a canonical mesh at (x, y, yaw); ``lift`` rests its lowest point on z=0."""
    z = -float(mesh.vertices[:, 2].min()) if lift and mesh.n_vertices else 0.0
    inst = Instance(owner, mesh, mesh_bvh(mesh), float(yaw), np.array([x, y, z], float),
                    np.zeros(3), np.zeros(3))
    w = inst.world_vertices()
    object.__setattr__(inst, "lo", w.min(axis=0) - 1e-6)
    object.__setattr__(inst, "hi", w.max(axis=0) + 1e-6)
    return inst


def assemble_scene(snapshot: ScenarioSnapshot, overrides: dict | None = None, library=None,
                   meshes: dict | None = None) -> Scene:
    """Instances for every actor plus background.

    Geometry comes from ``overrides`` first, then ``meshes`` (pre-resolved per
    actor id), then the asset library fitted to the actor's dims.
    """
    overrides = dict(overrides or {})
    ids = {a.id for a in snapshot.actors}
    unknown = set(overrides) - ids
    if unknown:
        raise KeyError(f"override for unknown actor(s): {sorted(unknown)}")
    insts = [make_instance(BACKGROUND, ground_mesh(), 0.0, 0.0, 0.0, lift=False)]
    for k, bg in enumerate(snapshot.background):
        insts.append(make_instance(BACKGROUND, bg, 0.0, 0.0, 0.0, lift=False))
    for a in snapshot.actors:
        if a.id in overrides:
            mesh = overrides[a.id]
        elif meshes and a.id in meshes:
            mesh = meshes[a.id]
        else:
            if library is None:
                from ..shape.vehicles import AssetLibrary

                library = AssetLibrary.default()
            mesh = library.mesh(a.geometry_ref) if a.geometry_ref else library.fitted_mesh(a.cls, a.dims)
        insts.append(make_instance(a.id, mesh, a.pose.x, a.pose.y, a.pose.heading))
    return Scene(tuple(insts))


@dataclass(frozen=True)
class SensorPose:
    x: float
    y: float
    z: float
    heading: float

    @classmethod
    def on_vehicle(cls, x: float, y: float, heading: float, config: SensorConfig) -> "SensorPose":
        mx, my, mz = config.mount
        c, s = math.cos(heading), math.sin(heading)
        return cls(x + c * mx - s * my, y + s * mx + c * my, mz, heading)


def cast_rays(scene: Scene, origin, dirs, max_range: float, brute: bool = False,
              backend=None) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit distance per ray (inf for a miss) and the hit instance index (-1).

    ``brute`` tests every triangle of every instance against every ray; it is
    the oracle for the BVH path and must agree with it bit for bit.
    """
    k = backend or kernels
    origin = np.asarray(origin, float)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    n = len(dirs)
    t_best = np.full(n, float(max_range))
    tag = np.full(n, -1, dtype=np.int32)
    if not brute:
        k.raycast_scene(origin, dirs, *scene.packed(), t_best, tag)
    else:
        for idx, inst in enumerate(scene.instances):
            c, s = math.cos(inst.yaw), math.sin(inst.yaw)
            rx = origin[0] - inst.translation[0]
            ry = origin[1] - inst.translation[1]
            lo = np.array([c * rx + s * ry, -s * rx + c * ry, origin[2] - inst.translation[2]])
            ld = np.empty_like(dirs)
            ld[:, 0] = c * dirs[:, 0] + s * dirs[:, 1]
            ld[:, 1] = -s * dirs[:, 0] + c * dirs[:, 1]
            ld[:, 2] = dirs[:, 2]
            k.raycast_brute(lo, ld, np.ascontiguousarray(inst.mesh.corners()), t_best, tag, idx)
    t_best[tag < 0] = np.inf
    return t_best, tag


def raycast(scene: Scene, pose: SensorPose, config: SensorConfig, seed=0, brute: bool = False,
            backend=None, return_owner: bool = False):
    """Simulated scan from ``pose``; points are returned in the sensor frame."""
    dirs_s = config.directions()
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    dirs_w = np.empty_like(dirs_s)
    dirs_w[:, 0] = c * dirs_s[:, 0] - s * dirs_s[:, 1]
    dirs_w[:, 1] = s * dirs_s[:, 0] + c * dirs_s[:, 1]
    dirs_w[:, 2] = dirs_s[:, 2]
    t, tag = cast_rays(scene, (pose.x, pose.y, pose.z), dirs_w, config.max_range, brute, backend)
    hit = np.flatnonzero(tag >= 0)
    r = t[hit]
    if config.noise_sigma > 0:
        noise = np.random.default_rng(seed).standard_normal(len(dirs_s))[hit]
        r = np.clip(r + config.noise_sigma * noise, 0.0, config.max_range)
    cloud = PointCloud(r[:, None] * dirs_s[hit], hit.astype(np.uint32))
    if return_owner:
        owners = np.array([scene.instances[i].owner for i in tag[hit]]) if hit.size else np.array([], str)
        return cloud, owners
    return cloud
