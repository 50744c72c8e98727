"""Shape realism: BEV occupancy histograms and Jensen-Shannon divergence."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..shape.mesh import MeshError, TriangleMesh

BINS = 100
N_SAMPLES = 1000
EPS = 1e-9


@dataclass(frozen=True, eq=False)
class RealismHistogram:
    """Normalized BEV histogram over the square footprint [-half, half]^2 (x, y)."""

    values: np.ndarray
    half: float

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.ndim != 2 or np.any(v < 0):
            raise ValueError("histogram must be a non-negative 2D array")
        total = v.sum()
        if total <= 0:
            raise ValueError("histogram is empty")
        object.__setattr__(self, "values", v / total)

    @property
    def bins(self) -> int:
        return self.values.shape[0]


def footprint_half(library) -> float:
    """Half side of the canonical footprint: room for 1.3x scaling plus 1 m deformation."""
    return 0.5 * 1.3 * max(max(a.dims[0], a.dims[1]) for a in library.assets) + 1.0


def bev_counts(mesh: TriangleMesh, half: float, bins: int = BINS, n: int = N_SAMPLES, seed: int = 0) -> np.ndarray:
    """Counts of ``n`` surface samples on the BEV grid; samples off the grid land in the edge bins."""
    if mesh.is_empty:
        raise MeshError("empty mesh has no realism histogram")
    xy = mesh.sample_surface(n, seed)[:, :2]
    ij = np.clip(np.floor((xy + half) / (2.0 * half) * bins).astype(int), 0, bins - 1)
    out = np.zeros((bins, bins))
    np.add.at(out, (ij[:, 0], ij[:, 1]), 1.0)
    return out


def mesh_histogram(mesh: TriangleMesh, half: float, bins: int = BINS, n: int = N_SAMPLES,
                   seed: int = 0) -> RealismHistogram:
    return RealismHistogram(bev_counts(mesh, half, bins, n, seed), half)


def library_histogram(library, bins: int = BINS, n: int = N_SAMPLES, seed: int = 0) -> RealismHistogram:
    """Pooled histogram of ``n`` samples from every library asset (asset k uses seed + k)."""
    half = footprint_half(library)
    total = sum(bev_counts(m, half, bins, n, seed + k) for k, m in enumerate(library.meshes()))
    return RealismHistogram(total, half)


def jsd(p, q, eps: float = EPS) -> float:
    """Base-2 Jensen-Shannon divergence of two histograms after adding ``eps`` to every bin."""
    p = np.asarray(p, float).ravel() + eps
    q = np.asarray(q, float).ravel() + eps
    if p.shape != q.shape:
        raise ValueError("histograms must have the same shape")
    p /= p.sum()
    q /= q.sum()
    m = 0.5 * (p + q)
    val = 0.5 * np.sum(p * np.log2(p / m)) + 0.5 * np.sum(q * np.log2(q / m))
    return float(min(max(val, 0.0), 1.0))


def jsd_realism(mesh: TriangleMesh, library_hist: RealismHistogram, seed: int = 0) -> float:
    """JSD between the shape's sampled BEV histogram and the library histogram."""
    h = mesh_histogram(mesh, library_hist.half, library_hist.bins, N_SAMPLES, seed)
    return jsd(h.values, library_hist.values)
