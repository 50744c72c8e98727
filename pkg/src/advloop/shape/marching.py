"""Vectorised marching cubes over an :class:`SdfVolume`.

Vertices are shared between neighbouring cubes by keying them on the global
voxel edge they sit on, so closed iso-surfaces come out as closed meshes.
"""
import numpy as np

from ._mc_tables import CORNER_OFFSETS, EDGE_CORNERS, TRI_TABLE
from .mesh import TriangleMesh
from .sdf import SdfVolume

_OFFS = np.array(CORNER_OFFSETS, dtype=np.int64)
_TRI_PAD = np.full((256, 15), -1, dtype=np.int64)
for _case, _row in enumerate(TRI_TABLE):
    _TRI_PAD[_case, :len(_row)] = _row
_TRI_COUNT = np.array([len(r) // 3 for r in TRI_TABLE], dtype=np.int64)

# each local edge -> (axis, lower-corner offset)
_EDGE_AXIS = np.empty(12, dtype=np.int64)
_EDGE_BASE = np.empty((12, 3), dtype=np.int64)
for _e, (_a, _b) in enumerate(EDGE_CORNERS):
    _d = _OFFS[_b] - _OFFS[_a]
    _EDGE_AXIS[_e] = int(np.flatnonzero(_d)[0])
    _EDGE_BASE[_e] = np.minimum(_OFFS[_a], _OFFS[_b])


def marching_cubes(volume: SdfVolume, iso: float = 0.0) -> TriangleMesh:
    """Extract the ``iso`` level set as a triangle mesh (outward normals).

    Corners with value < iso count as inside. An empty mesh is returned when
    the field does not cross ``iso``.
    """
    v = volume.values
    r = volume.resolution
    inside = v < iso
    n = r - 1
    case = np.zeros((n, n, n), dtype=np.int64)
    for c, (dx, dy, dz) in enumerate(_OFFS):
        case |= inside[dx:dx + n, dy:dy + n, dz:dz + n].astype(np.int64) << c
    active = np.flatnonzero((case > 0) & (case < 255))
    if active.size == 0:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    cases = case.reshape(-1)[active]
    ci, cj, ck = np.unravel_index(active, (n, n, n))

    rows = _TRI_PAD[cases]                      # (M, 15)
    valid = rows >= 0
    cube_of = np.repeat(np.arange(len(cases)), valid.sum(axis=1))
    local = rows[valid]                         # local edge ids, triangle-major
    base = _EDGE_BASE[local]
    gi = ci[cube_of] + base[:, 0]
    gj = cj[cube_of] + base[:, 1]
    gk = ck[cube_of] + base[:, 2]
    axis = _EDGE_AXIS[local]
    key = ((axis * r + gi) * r + gj) * r + gk
    uniq, inv = np.unique(key, return_inverse=True)

    ax = uniq // (r ** 3)
    rem = uniq % (r ** 3)
    i0, j0, k0 = np.unravel_index(rem, (r, r, r))
    step = np.eye(3, dtype=np.int64)[ax]
    i1, j1, k1 = i0 + step[:, 0], j0 + step[:, 1], k0 + step[:, 2]
    v0 = v[i0, j0, k0]
    v1 = v[i1, j1, k1]
    t = (iso - v0) / (v1 - v0)
    p0 = np.stack([i0, j0, k0], axis=1).astype(np.float64)
    pos = p0 + t[:, None] * step
    verts = volume.origin + pos * volume.voxel_size

    tris = inv.reshape(-1, 3)
    # table winding is inward for the "value < iso is inside" convention
    tris = tris[:, [0, 2, 1]]
    keep = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    tris = tris[keep]
    c = verts[tris]
    area2 = np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)
    tris = tris[area2 > 0.0]
    return TriangleMesh(verts, tris)
