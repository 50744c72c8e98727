"""Per-vertex deformation baseline with an l-infinity bound."""
import numpy as np

from .mesh import TriangleMesh


def vertex_deform(base: TriangleMesh, deltas, bound: float) -> TriangleMesh:
    """Move each vertex by ``clip(delta, -bound, bound)`` componentwise."""
    if bound < 0:
        raise ValueError("bound must be non-negative")
    d = np.asarray(deltas, float)
    if d.shape != base.vertices.shape:
        raise ValueError(f"deltas shape {d.shape} != vertices shape {base.vertices.shape}")
    return TriangleMesh(base.vertices + np.clip(d, -bound, bound), base.triangles)


def random_deltas(mesh: TriangleMesh, bound: float, seed: int) -> np.ndarray:
    """Uniform per-vertex offsets in [-bound, bound]^3 (one search candidate)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-bound, bound, size=mesh.vertices.shape)
