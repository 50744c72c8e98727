"""Signed distance volumes sampled on a regular grid over a centered cube."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from .mesh import MeshError, TriangleMesh


class SignAmbiguityError(MeshError):
    """Raised when a mesh is not closed, so inside/outside is undefined."""


@dataclass(frozen=True, eq=False)
class SdfVolume:
    """R**3 signed distances on the nodes of a grid spanning [-extent/2, extent/2]**3.

    ``values[i, j, k]`` is the sample at (x_i, y_j, z_k); negative inside.
    """

    resolution: int
    extent: float
    values: np.ndarray

    def __post_init__(self):
        r = int(self.resolution)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.size != r ** 3:
            raise ValueError(f"expected {r ** 3} values, got {vals.size}")
        vals = vals.reshape(r, r, r)
        if not np.all(np.isfinite(vals)):
            raise ValueError("SDF values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "resolution", r)
        object.__setattr__(self, "extent", float(self.extent))
        object.__setattr__(self, "values", vals)

    @property
    def voxel_size(self) -> float:
        return self.extent / (self.resolution - 1)

    @property
    def origin(self) -> float:
        return -0.5 * self.extent

    def axis(self) -> np.ndarray:
        return grid_axis(self.resolution, self.extent)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def sample(self, points) -> np.ndarray:
        """Trilinear interpolation at world points (clamped to the grid)."""
        p = (np.atleast_2d(np.asarray(points, float)) - self.origin) / self.voxel_size
        r = self.resolution
        p = np.clip(p, 0.0, r - 1 - 1e-12)
        i0 = np.floor(p).astype(int)
        f = p - i0
        out = np.zeros(len(p))
        v = self.values
        for dx in (0, 1):
            wx = f[:, 0] if dx else 1 - f[:, 0]
            for dy in (0, 1):
                wy = f[:, 1] if dy else 1 - f[:, 1]
                for dz in (0, 1):
                    wz = f[:, 2] if dz else 1 - f[:, 2]
                    out += wx * wy * wz * v[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
        return out


def grid_axis(resolution: int, extent: float) -> np.ndarray:
    return np.linspace(-0.5 * extent, 0.5 * extent, int(resolution))


def grid_points(resolution: int, extent: float) -> np.ndarray:
    ax = grid_axis(resolution, extent)
    x, y, z = np.meshgrid(ax, ax, ax, indexing="ij")
    return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)


def signed_distance(mesh: TriangleMesh, points) -> np.ndarray:
    """Signed distance from points to a closed mesh (negative inside).

    Sign comes from the generalized winding number, which is robust to
    points near edges and vertices.
    """
    if not mesh.is_watertight():
        raise SignAmbiguityError("sign ambiguity: mesh is not watertight "
                                 "(every edge must be shared by exactly two triangles)")
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    tris = np.ascontiguousarray(mesh.corners())
    dist = kernels.point_mesh_distance(pts, tris)
    wind = kernels.winding_number(pts, tris)
    return np.where(wind > 0.5, -dist, dist)


def mesh_to_sdf(mesh: TriangleMesh, resolution: int, extent: float = 1.0) -> SdfVolume:
    """Sample the signed distance of a closed, pre-scaled mesh on an R**3 grid.

    Distances are not truncated; they are clamped to ``extent * sqrt(3)``.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    values = signed_distance(mesh, grid_points(resolution, extent))
    cap = extent * np.sqrt(3.0)
    return SdfVolume(resolution, extent, np.clip(values, -cap, cap))
