"""Procedural vehicle meshes and the asset library built from them.

A vehicle is a side-view silhouette (body, cabin, wheels) extruded across its
width, which gives a closed manifold whose bounding box matches the requested
dimensions exactly.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import MIN_TRIANGLE_AREA, MeshError, TriangleMesh, read_obj, write_obj

VEHICLE_CLASSES = ("sedan", "suv", "van", "pickup")

# (length, width, height) ranges in meters
CLASS_DIMS = {
    "sedan": ((4.2, 5.0), (1.70, 1.90), (1.35, 1.50)),
    "suv": ((4.4, 5.0), (1.80, 2.00), (1.65, 1.85)),
    "van": ((4.8, 5.6), (1.90, 2.10), (1.90, 2.30)),
    "pickup": ((5.0, 5.8), (1.90, 2.05), (1.75, 1.95)),
}

# silhouette keypoints as (x fraction of length from rear, z fraction of height)
_PROFILES = {
    "sedan": [(0.00, 0.52), (0.05, 0.60), (0.28, 0.64), (0.36, 1.00), (0.64, 1.00),
              (0.78, 0.66), (0.97, 0.58), (1.00, 0.48)],
    "suv": [(0.00, 0.55), (0.02, 0.97), (0.08, 1.00), (0.70, 1.00), (0.82, 0.66),
            (0.98, 0.60), (1.00, 0.50)],
    "van": [(0.00, 0.50), (0.01, 0.98), (0.04, 1.00), (0.80, 1.00), (0.92, 0.62),
            (0.99, 0.55), (1.00, 0.45)],
    "pickup": [(0.00, 0.58), (0.01, 0.62), (0.40, 0.62), (0.42, 1.00), (0.68, 1.00),
               (0.78, 0.65), (0.98, 0.60), (1.00, 0.50)],
}
_WHEEL_X = {"sedan": (0.17, 0.80), "suv": (0.17, 0.81), "van": (0.16, 0.83), "pickup": (0.15, 0.82)}
_WHEEL_R = {"sedan": 0.22, "suv": 0.22, "van": 0.17, "pickup": 0.20}
_ARC_SEGMENTS = 8


def _ear_clip(poly: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate a simple counter-clockwise polygon without Steiner points."""
    idx = list(range(len(poly)))
    out = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(poly) ** 2:
            raise MeshError("ear clipping failed; polygon is not simple")
        n = len(idx)
        for k in range(n):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % n]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if cross(a, b, c) <= 1e-12:
                continue
            ok = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = poly[j]
                if cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0:
                    ok = False
                    break
            if ok:
                out.append((i0, i1, i2))
                idx.pop(k)
                break
    out.append(tuple(idx))
    return out


def _silhouette(cls: str, length: float, height: float, rng: np.random.Generator) -> np.ndarray:
    keys = np.array(_PROFILES[cls], dtype=float)
    jitter = rng.uniform(-0.025, 0.025, size=keys.shape)
    jitter[[0, -1], 0] = 0.0                       # bumpers define the length
    jitter[keys[:, 1] >= 1.0, 1] = 0.0             # roof defines the height
    keys = keys + jitter
    keys[:, 1] = np.minimum(keys[:, 1], 1.0)
    keys[:, 0] = np.maximum.accumulate(np.clip(keys[:, 0], 0.0, 1.0))
    rw = _WHEEL_R[cls] * height * rng.uniform(0.95, 1.05)
    wx = np.array(_WHEEL_X[cls]) + rng.uniform(-0.01, 0.01, size=2)

    x0 = -0.5 * length
    pts = []
    # underbody from front bumper to rear, wheels hang below the sill
    pts.append((x0 + length, rw))
    for w in wx[::-1]:
        cx = x0 + w * length
        for th in np.linspace(0.0, -np.pi, _ARC_SEGMENTS + 1):
            z = rw + rw * np.sin(th)
            pts.append((cx + rw * np.cos(th), 0.0 if np.isclose(th, -0.5 * np.pi) else z))
    pts.append((x0, rw))
    for fx, fz in keys:
        pts.append((x0 + fx * length, fz * height))
    poly = np.array(pts)
    # drop consecutive duplicates
    keep = np.ones(len(poly), dtype=bool)
    keep[1:] = np.any(np.abs(np.diff(poly, axis=0)) > 1e-9, axis=1)
    poly = poly[keep]
    if np.allclose(poly[0], poly[-1]):
        poly = poly[:-1]
    area = 0.5 * np.sum(poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1])
    return poly if area > 0 else poly[::-1]


def procedural_vehicle(cls: str, length: float, width: float, height: float, seed: int = 0) -> TriangleMesh:
    """Closed vehicle mesh in the canonical frame (bbox centered on the origin, +x forward)."""
    if cls not in VEHICLE_CLASSES:
        raise ValueError(f"unknown vehicle class {cls!r}")
    if min(length, width, height) <= 0:
        raise ValueError("vehicle dimensions must be positive")
    if length > 15 or width > 4 or height > 5 or width > length:
        raise ValueError(f"implausible dimensions for a {cls}: {length}x{width}x{height}")
    rng = np.random.default_rng([VEHICLE_CLASSES.index(cls), seed])
    poly = _silhouette(cls, length, height, rng)
    n = len(poly)
    half_w = 0.5 * width
    zc = 0.5 * height
    # vertex k at y=-w/2, k+n at y=+w/2; profile (x, z)
    verts = np.concatenate([
        np.column_stack([poly[:, 0], np.full(n, -half_w), poly[:, 1] - zc]),
        np.column_stack([poly[:, 0], np.full(n, half_w), poly[:, 1] - zc]),
    ])
    cap = _ear_clip(poly)
    faces = []
    # profile is CCW in (x, z); the -y cap faces -y with that winding
    for a, b, c in cap:
        faces.append((a, b, c))
        faces.append((c + n, b + n, a + n))
    for k in range(n):
        k1 = (k + 1) % n
        faces.append((k, k1 + n, k1))
        faces.append((k, k + n, k1 + n))
    mesh = TriangleMesh(verts, np.array(faces))
    c = mesh.corners()
    signed = np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum()
    if signed < 0:
        mesh = TriangleMesh(verts, mesh.triangles[:, ::-1])
    if mesh.areas().min() < MIN_TRIANGLE_AREA:
        raise MeshError("degenerate triangle in generated vehicle")
    return mesh


@dataclass(frozen=True)
class Asset:
    asset_id: str
    cls: str
    dims: tuple[float, float, float]
    seed: int

    def mesh(self) -> TriangleMesh:
        return procedural_vehicle(self.cls, *self.dims, seed=self.seed)


def build_library(n_per_class: int = 10, seed: int = 0) -> list[Asset]:
    """Deterministic procedural asset library (default 4 classes x 10)."""
    rng = np.random.default_rng(seed)
    assets = []
    for cls in VEHICLE_CLASSES:
        ranges = CLASS_DIMS[cls]
        for k in range(n_per_class):
            dims = tuple(round(float(rng.uniform(lo, hi)), 3) for lo, hi in ranges)
            assets.append(Asset(f"{cls}_{k:02d}", cls, dims, int(rng.integers(0, 2 ** 31 - 1))))
    return assets


class AssetLibrary:
    """Library of canonical meshes keyed by asset id, with per-process mesh cache."""

    def __init__(self, assets: list[Asset]):
        self.assets = list(assets)
        self._by_id = {a.asset_id: a for a in self.assets}
        self._cache: dict[str, TriangleMesh] = {}

    @classmethod
    def default(cls, n_per_class: int = 10, seed: int = 0) -> "AssetLibrary":
        return cls(build_library(n_per_class, seed))

    @classmethod
    def from_dir(cls, path) -> "AssetLibrary":
        path = Path(path)
        index = json.loads((path / "library.json").read_text())
        lib = cls([Asset(a["asset_id"], a["class"], tuple(a["dims"]), a["seed"]) for a in index["assets"]])
        for a in lib.assets:
            obj = path / f"{a.asset_id}.obj"
            if obj.exists():
                lib._cache[a.asset_id] = read_obj(obj)
        return lib

    @classmethod
    def from_env(cls) -> "AssetLibrary":
        d = os.environ.get("ADVLOOP_ASSET_DIR")
        if d and (Path(d) / "library.json").exists():
            return cls.from_dir(d)
        return cls.default()

    def save(self, path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        index = {"assets": [{"asset_id": a.asset_id, "class": a.cls, "dims": list(a.dims), "seed": a.seed}
                            for a in self.assets]}
        (path / "library.json").write_text(json.dumps(index, indent=2))
        for a in self.assets:
            write_obj(self.mesh(a.asset_id), path / f"{a.asset_id}.obj", header=f"asset {a.asset_id} class {a.cls}")

    def __len__(self):
        return len(self.assets)

    def ids(self) -> list[str]:
        return [a.asset_id for a in self.assets]

    def get(self, asset_id: str) -> Asset:
        return self._by_id[asset_id]

    def mesh(self, asset_id: str) -> TriangleMesh:
        if asset_id not in self._cache:
            self._cache[asset_id] = self._by_id[asset_id].mesh()
        return self._cache[asset_id]

    def meshes(self) -> list[TriangleMesh]:
        return [self.mesh(i) for i in self.ids()]

    def nearest(self, cls: str, dims) -> str:
        """Asset of the same class whose dims are closest to ``dims``."""
        cands = [a for a in self.assets if a.cls == cls] or self.assets
        d = np.asarray(dims, float)
        return min(cands, key=lambda a: (float(np.sum((np.array(a.dims) - d) ** 2)), a.asset_id)).asset_id

    def fitted_mesh(self, cls: str, dims) -> TriangleMesh:
        """Nearest asset rescaled so its bounding box equals ``dims`` exactly."""
        base = self.mesh(self.nearest(cls, dims))
        lo, hi = base.bounds()
        scale = np.asarray(dims, float) / (hi - lo)
        center = 0.5 * (lo + hi)
        return TriangleMesh((base.vertices - center) * scale, base.triangles)

    def prescale(self) -> float:
        """Factor mapping meters into the unit cube: 1.1 x largest dimension."""
        return 1.1 * max(max(a.dims) for a in self.assets)
