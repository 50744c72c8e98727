import numpy as np
import pytest

from advloop.shape import SdfVolume, TriangleMesh
from advloop.shape.sdf import grid_points


def icosphere(radius: float = 1.0, center=(0.0, 0.0, 0.0), subdiv: int = 3) -> TriangleMesh:
    """Subdivided icosahedron with every vertex exactly on the sphere."""
    t = (1.0 + 5 ** 0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4), (11, 10, 2),
         (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9), (4, 9, 5),
         (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    for _ in range(subdiv):
        cache, nf = {}, []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        f = nf
    return TriangleMesh(np.array(verts) * radius + np.asarray(center, float), np.array(f))


def sphere_volume(radius: float, resolution: int, extent: float = 1.0, center=(0.0, 0.0, 0.0)) -> SdfVolume:
    p = grid_points(resolution, extent)
    return SdfVolume(resolution, extent, np.linalg.norm(p - np.asarray(center), axis=1) - radius)


def box_mesh(lo, hi) -> TriangleMesh:
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    v = np.array([[x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
                  [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1]], float)
    f = np.array([[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7], [0, 1, 5], [0, 5, 4],
                  [1, 2, 6], [1, 6, 5], [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]])
    return TriangleMesh(v, f)


@pytest.fixture(scope="session")
def library():
    from advloop.shape import AssetLibrary

    return AssetLibrary.default()


@pytest.fixture(scope="session")
def small_basis(library):
    """Low-resolution library basis shared by tests that only need a valid one."""
    from advloop.shape import fit_library_basis

    return fit_library_basis(library, 3, 20)
