"""PCA shape basis over flattened SDF volumes, latent codes and decoding."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .marching import marching_cubes
from .mesh import MeshError, TriangleMesh
from .sdf import SdfVolume

SCALE_RANGE = (0.8, 1.3)
_MAGIC = b"ADVBASIS"
_VERSION = 1
_HEADER = struct.Struct("<8sIIIdd")


class DimensionError(ValueError):
    pass


class EmptyShapeError(MeshError):
    """The decoded field is positive everywhere, so there is no surface."""


@dataclass(frozen=True, eq=False)
class ShapeBasis:
    """mean (|L|,), components (|L|, K) with orthonormal columns, per-dim latent bounds."""

    resolution: int
    extent: float
    mean: np.ndarray
    components: np.ndarray
    latent_lo: np.ndarray
    latent_hi: np.ndarray
    canonical_scale: float
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[1]

    @property
    def code_dim(self) -> int:
        """Length of a normalized latent code: K shape dims + width + length scale."""
        return self.k + 2

    def _check(self, volume: SdfVolume):
        if volume.resolution != self.resolution:
            raise DimensionError(f"volume resolution {volume.resolution} != basis resolution {self.resolution}")

    def encode(self, volume: SdfVolume) -> np.ndarray:
        self._check(volume)
        return self.components.T @ (volume.flat() - self.mean)

    def field(self, z) -> np.ndarray:
        return self.components @ np.asarray(z, float) + self.mean

    def volume(self, z) -> SdfVolume:
        return SdfVolume(self.resolution, self.extent, self.field(z))

    def latent_from_code(self, u) -> np.ndarray:
        u = _check_code(u, self.code_dim)
        return self.latent_lo + u[:self.k] * (self.latent_hi - self.latent_lo)

    def code_from_latent(self, z, width_scale: float = 1.0, length_scale: float = 1.0) -> np.ndarray:
        """Inverse of the affine latent map (dims with zero range map to 0)."""
        span = self.latent_hi - self.latent_lo
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(span > 0, (np.asarray(z, float) - self.latent_lo) / span, 0.0)
        lo, hi = SCALE_RANGE
        s = [(width_scale - lo) / (hi - lo), (length_scale - lo) / (hi - lo)]
        return np.concatenate([u, s])

    def scales_from_code(self, u) -> tuple[float, float]:
        u = _check_code(u, self.code_dim)
        lo, hi = SCALE_RANGE
        return float(lo + u[self.k] * (hi - lo)), float(lo + u[self.k + 1] * (hi - lo))

    def decode_latent(self, z, width_scale: float = 1.0, length_scale: float = 1.0) -> TriangleMesh:
        mesh = marching_cubes(self.volume(z), 0.0)
        if mesh.is_empty:
            raise EmptyShapeError("empty shape: decoded field has no zero crossing")
        s = self.canonical_scale
        return mesh.transformed(scale=(s * length_scale, s * width_scale, s))

    def decode(self, u) -> TriangleMesh:
        """Normalized code in [0, 1]^(K+2) -> mesh in meters (canonical frame)."""
        w, l = self.scales_from_code(u)
        return self.decode_latent(self.latent_from_code(u), w, l)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _VERSION, self.resolution, self.k, self.extent, self.canonical_scale))
            for arr in (self.mean, self.components, self.latent_lo, self.latent_hi, self.explained_variance):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "ShapeBasis":
        data = Path(path).read_bytes()
        magic, version, r, k, extent, scale = _HEADER.unpack_from(data, 0)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a shape basis file")
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported basis version {version}")
        n = r ** 3
        flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
        sizes = [n, n * k, k, k, k]
        if flat.size != sum(sizes):
            raise ValueError(f"{path}: truncated basis file")
        parts = np.split(flat.astype(np.float64), np.cumsum(sizes)[:-1])
        return cls(r, extent, parts[0], parts[1].reshape(n, k), parts[2], parts[3], scale, parts[4])


def _check_code(u, dim: int) -> np.ndarray:
    u = np.asarray(u, float).reshape(-1)
    if u.size != dim:
        raise DimensionError(f"latent code must have {dim} components, got {u.size}")
    if np.any(u < 0.0) or np.any(u > 1.0):
        raise ValueError("latent code components must lie in [0, 1]")
    return u


def fit_basis(volumes: list[SdfVolume], k: int, canonical_scale: float = 1.0) -> ShapeBasis:
    """Top-``k`` principal components of the flattened volumes."""
    if k < 1:
        raise DimensionError("K must be >= 1")
    if len(volumes) < k + 1:
        raise DimensionError(f"need at least K+1={k + 1} volumes, got {len(volumes)}")
    res = {v.resolution for v in volumes}
    ext = {v.extent for v in volumes}
    if len(res) != 1 or len(ext) != 1:
        raise DimensionError("all volumes must share resolution and extent")
    x = np.stack([v.flat() for v in volumes])
    # offset from the first sample keeps the mean exact when all inputs agree
    mean = x[0] + (x - x[0]).mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    comps = vt[:k].T.copy()
    # deterministic sign: largest-magnitude entry of each component is positive
    piv = np.argmax(np.abs(comps), axis=0)
    comps *= np.sign(comps[piv, np.arange(k)])
    var = (s[:k] ** 2) / max(len(volumes) - 1, 1)
    lat = xc @ comps
    return ShapeBasis(res.pop(), ext.pop(), mean, comps, lat.min(axis=0), lat.max(axis=0),
                      float(canonical_scale), var)


def reconstruction_error(basis: ShapeBasis, volumes: list[SdfVolume]) -> float:
    """Mean squared L2 error of the linear (no marching cubes) round trip."""
    errs = [np.sum((basis.field(basis.encode(v)) - v.flat()) ** 2) for v in volumes]
    return float(np.mean(errs))


def library_volumes(meshes: list[TriangleMesh], resolution: int, canonical_scale: float) -> list[SdfVolume]:
    from .sdf import mesh_to_sdf

    return [mesh_to_sdf(m.transformed(1.0 / canonical_scale), resolution, 1.0) for m in meshes]


def fit_library_basis(library, k: int = 3, resolution: int = 48) -> ShapeBasis:
    """Pre-scale every library mesh into the unit cube, voxelize, and fit PCA."""
    scale = library.prescale()
    return fit_basis(library_volumes(library.meshes(), resolution, scale), k, canonical_scale=scale)
