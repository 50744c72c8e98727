"""Binary bounding-volume hierarchy over one mesh's triangles.

Median split on the longest axis of the triangle centroids, leaves hold at
most ``LEAF_SIZE`` triangles. Nodes are stored flat; ``left < 0`` marks a leaf
whose triangles are ``tris[start:start + count]`` in the reordered array.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from ..shape.mesh import TriangleMesh

LEAF_SIZE = 8
# node boxes are inflated so rounding in the slab test never culls a real hit
_PAD = 1e-7


@dataclass(frozen=True, eq=False)
class Bvh:
    tris: np.ndarray        # (F, 3, 3) corners in BVH order
    order: np.ndarray       # original triangle index of each row of ``tris``
    lo: np.ndarray          # (N, 3)
    hi: np.ndarray
    left: np.ndarray        # int32, -1 for leaves
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.left[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max()) if d.size else 0


def build_bvh(corners: np.ndarray, leaf_size: int = LEAF_SIZE) -> Bvh:
    corners = np.ascontiguousarray(corners, dtype=np.float64).reshape(-1, 3, 3)
    n = len(corners)
    tri_lo = corners.min(axis=1)
    tri_hi = corners.max(axis=1)
    cent = corners.mean(axis=1)
    order = np.arange(n)
    lo, hi, left, right, start, count = [], [], [], [], [], []

    def new_node(s, e):
        idx = order[s:e]
        if e > s:
            lo.append(tri_lo[idx].min(axis=0) - _PAD)
            hi.append(tri_hi[idx].max(axis=0) + _PAD)
        else:
            lo.append(np.full(3, np.inf))
            hi.append(np.full(3, -np.inf))
        left.append(-1)
        right.append(-1)
        start.append(s)
        count.append(e - s)
        return len(left) - 1

    stack = [(new_node(0, n), 0, n)]
    while stack:
        node, s, e = stack.pop()
        if e - s <= leaf_size:
            continue
        idx = order[s:e]
        c = cent[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        mid = (e - s) // 2
        # stable sort keeps the build deterministic when centroids tie
        order[s:e] = idx[np.argsort(c[:, axis], kind="stable")]
        l_node = new_node(s, s + mid)
        r_node = new_node(s + mid, e)
        left[node], right[node] = l_node, r_node
        count[node] = 0
        stack.append((r_node, s + mid, e))
        stack.append((l_node, s, s + mid))

    i32 = np.int32
    return Bvh(np.ascontiguousarray(corners[order]), order, np.array(lo).reshape(-1, 3),
               np.array(hi).reshape(-1, 3), np.array(left, i32), np.array(right, i32),
               np.array(start, i32), np.array(count, i32))


_CACHE: "weakref.WeakKeyDictionary[TriangleMesh, Bvh]" = weakref.WeakKeyDictionary()


def mesh_bvh(mesh: TriangleMesh) -> Bvh:
    """BVH of a mesh, cached per mesh object (meshes are immutable)."""
    bvh = _CACHE.get(mesh)
    if bvh is None:
        bvh = build_bvh(mesh.corners())
        _CACHE[mesh] = bvh
    return bvh
