"""Pure numpy implementations of the compiled kernels.

Same signatures and in-place semantics as :mod:`advloop._kernels`. The BVH
walk is vectorised breadth-first over (ray, node) pairs instead of a per-ray
stack, which gives the same nearest hits.
"""
import numpy as np

_CHUNK = 1 << 21


def _mt(origin, dirs, tris):
    """Vectorised Moller-Trumbore; nan where there is no hit."""
    o = np.broadcast_to(origin, dirs.shape)
    v0 = tris[:, 0]
    e1x = tris[:, 1, 0] - v0[:, 0]
    e1y = tris[:, 1, 1] - v0[:, 1]
    e1z = tris[:, 1, 2] - v0[:, 2]
    e2x = tris[:, 2, 0] - v0[:, 0]
    e2y = tris[:, 2, 1] - v0[:, 1]
    e2z = tris[:, 2, 2] - v0[:, 2]
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    tol = 1e-12 * np.sqrt((e1x * e1x + e1y * e1y + e1z * e1z)
                          * (e2x * e2x + e2y * e2y + e2z * e2z)
                          * (dx * dx + dy * dy + dz * dz))
    ok = np.abs(det) > tol
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        sx = o[:, 0] - v0[:, 0]
        sy = o[:, 1] - v0[:, 1]
        sz = o[:, 2] - v0[:, 2]
        u = (sx * px + sy * py + sz * pz) * inv
        ok &= (u >= 0.0) & (u <= 1.0)
        qx = sy * e1z - sz * e1y
        qy = sz * e1x - sx * e1z
        qz = sx * e1y - sy * e1x
        v = (dx * qx + dy * qy + dz * qz) * inv
        ok &= (v >= 0.0) & (u + v <= 1.0)
        t = (e2x * qx + e2y * qy + e2z * qz) * inv
    ok &= t >= 0.0
    return np.where(ok, t, np.nan)


def ray_triangle(origin, direction, tri):
    """Nearest t >= 0 of the ray against one triangle, or None."""
    t = _mt(np.asarray(origin, float), np.asarray(direction, float)[None],
            np.asarray(tri, float)[None])[0]
    return None if np.isnan(t) else float(t)


def ray_triangle_batch(origins, dirs, tris):
    return _mt(np.asarray(origins, float), np.asarray(dirs, float), np.asarray(tris, float))


def _slab(origin, dirs, lo, hi, tmax):
    t0 = np.zeros(len(dirs))
    t1 = tmax.copy()
    ok = np.ones(len(dirs), dtype=bool)
    for k in range(3):
        d = dirs[:, k]
        o = origin[k]
        flat = np.abs(d) < 1e-300
        ok &= ~flat | ((o >= lo[:, k]) & (o <= hi[:, k]))
        with np.errstate(divide="ignore", invalid="ignore"):
            a = (lo[:, k] - o) / d
            b = (hi[:, k] - o) / d
        near = np.where(flat, -np.inf, np.minimum(a, b))
        far = np.where(flat, np.inf, np.maximum(a, b))
        t0 = np.maximum(t0, near)
        t1 = np.minimum(t1, far)
    return ok & (t0 <= t1)


def _commit(rays, t, t_best, hit_tag, tag):
    hit = ~np.isnan(t)
    rays, t = rays[hit], t[hit]
    if rays.size == 0:
        return
    order = np.lexsort((t, rays))
    rays, t = rays[order], t[order]
    first = np.ones(rays.size, dtype=bool)
    first[1:] = rays[1:] != rays[:-1]
    rays, t = rays[first], t[first]
    better = t < t_best[rays]
    t_best[rays[better]] = t[better]
    hit_tag[rays[better]] = tag


def raycast_bvh(origin, dirs, tris, node_lo, node_hi, node_left, node_right,
                node_start, node_count, t_best, hit_tag, tag):
    """Traverse one mesh BVH for every ray, lowering ``t_best`` in place."""
    origin = np.asarray(origin, float)
    rays = np.arange(len(dirs))
    nodes = np.zeros(len(dirs), dtype=np.int64)
    while rays.size:
        keep = _slab(origin, dirs[rays], node_lo[nodes], node_hi[nodes], t_best[rays])
        rays, nodes = rays[keep], nodes[keep]
        leaf = node_left[nodes] < 0
        lr, ln = rays[leaf], nodes[leaf]
        if lr.size:
            cnt = node_count[ln].astype(np.int64)
            total = int(cnt.sum())
            rr = np.repeat(lr, cnt)
            offs = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
            tri_idx = np.repeat(node_start[ln].astype(np.int64), cnt) + offs
            for s in range(0, total, _CHUNK):
                sl = slice(s, s + _CHUNK)
                t = _mt(origin, dirs[rr[sl]], tris[tri_idx[sl]])
                _commit(rr[sl], t, t_best, hit_tag, tag)
        inner = ~leaf
        ir, inn = rays[inner], nodes[inner]
        rays = np.concatenate([ir, ir])
        nodes = np.concatenate([node_left[inn], node_right[inn]]).astype(np.int64)


def raycast_scene(origin, dirs, cos_yaw, sin_yaw, trans, box_lo, box_hi, node_offset, tri_offset,
                  tris, node_lo, node_hi, node_left, node_right, node_start, node_count, t_best, hit_tag):
    """Two-level traversal: world AABB per instance, then its BVH in the local frame."""
    origin = np.asarray(origin, float)
    n_inst = len(cos_yaw)
    n_nodes = len(node_left)
    for q in range(n_inst):
        sel = np.flatnonzero(_slab(origin, dirs, box_lo[q][None], box_hi[q][None], t_best))
        if sel.size == 0:
            continue
        c, s = cos_yaw[q], sin_yaw[q]
        rx = origin[0] - trans[q, 0]
        ry = origin[1] - trans[q, 1]
        lo = np.array([c * rx + s * ry, -s * rx + c * ry, origin[2] - trans[q, 2]])
        d = dirs[sel]
        ld = np.empty_like(d)
        ld[:, 0] = c * d[:, 0] + s * d[:, 1]
        ld[:, 1] = -s * d[:, 0] + c * d[:, 1]
        ld[:, 2] = d[:, 2]
        a = node_offset[q]
        b = node_offset[q + 1] if q + 1 < n_inst else n_nodes
        ta = tri_offset[q]
        tb = tri_offset[q + 1] if q + 1 < n_inst else len(tris)
        tbest = t_best[sel].copy()
        tag = hit_tag[sel].copy()
        raycast_bvh(lo, ld, tris[ta:tb], node_lo[a:b], node_hi[a:b], node_left[a:b], node_right[a:b],
                    node_start[a:b], node_count[a:b], tbest, tag, q)
        t_best[sel] = tbest
        hit_tag[sel] = tag


def raycast_brute(origin, dirs, tris, t_best, hit_tag, tag):
    """Exhaustive per-ray scan over every triangle (oracle path)."""
    origin = np.asarray(origin, float)
    n, m = len(dirs), len(tris)
    if n == 0 or m == 0:
        return
    step = max(1, _CHUNK // m)
    for s in range(0, n, step):
        rays = np.arange(s, min(n, s + step))
        rr = np.repeat(rays, m)
        ti = np.tile(np.arange(m), rays.size)
        t = _mt(origin, dirs[rr], tris[ti])
        _commit(rr, t, t_best, hit_tag, tag)


def _seg_dist2(p, a, b):
    ab = b - a
    denom = np.einsum("...k,...k->...", ab, ab)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.einsum("...k,...k->...", p - a, ab) / denom
    s = np.clip(np.nan_to_num(s), 0.0, 1.0)
    c = a + s[..., None] * ab
    d = p - c
    return np.einsum("...k,...k->...", d, d)


def point_mesh_distance(points, tris):
    """Unsigned distance from each point to the nearest triangle."""
    points = np.asarray(points, float)
    tris = np.asarray(tris, float)
    out = np.empty(len(points))
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    n = np.cross(b - a, c - a)
    nn = np.einsum("ij,ij->i", n, n)
    step = max(1, _CHUNK // max(len(tris), 1))
    for s in range(0, len(points), step):
        p = points[s:s + step, None, :]
        best = np.minimum(_seg_dist2(p, a, b), _seg_dist2(p, b, c))
        best = np.minimum(best, _seg_dist2(p, c, a))
        # interior projection
        ap = p - a
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.einsum("pjk,jk->pj", ap, n) / nn
        q = p - h[..., None] * n
        c1 = np.einsum("pjk,jk->pj", np.cross(b - a, q - a), n)
        c2 = np.einsum("pjk,jk->pj", np.cross(c - b, q - b), n)
        c3 = np.einsum("pjk,jk->pj", np.cross(a - c, q - c), n)
        inside = (c1 >= 0) & (c2 >= 0) & (c3 >= 0) & (nn > 0)
        plane = np.where(inside, h * h * nn, np.inf)
        out[s:s + step] = np.sqrt(np.minimum(best, plane).min(axis=1))
    return out


def winding_number(points, tris):
    """Generalized winding number of a closed mesh at each point."""
    points = np.asarray(points, float)
    tris = np.asarray(tris, float)
    out = np.empty(len(points))
    step = max(1, _CHUNK // max(len(tris), 1))
    for s in range(0, len(points), step):
        p = points[s:s + step, None, :]
        a = tris[None, :, 0] - p
        b = tris[None, :, 1] - p
        c = tris[None, :, 2] - p
        la = np.linalg.norm(a, axis=-1)
        lb = np.linalg.norm(b, axis=-1)
        lc = np.linalg.norm(c, axis=-1)
        num = np.einsum("...k,...k->...", a, np.cross(b, c))
        den = (la * lb * lc + np.einsum("...k,...k->...", a, b) * lc
               + np.einsum("...k,...k->...", a, c) * lb
               + np.einsum("...k,...k->...", b, c) * la)
        out[s:s + step] = (2.0 * np.arctan2(num, den)).sum(axis=1) / (4.0 * np.pi)
    return out


def convex_hull_2d(xy):
    """Monotone-chain hull, counter-clockwise from the lowest-x (then lowest-y) point."""
    xy = np.asarray(xy, float)
    if len(xy) == 0:
        return np.zeros((0, 2))
    p = xy[np.lexsort((xy[:, 1], xy[:, 0]))]
    keep = np.ones(len(p), dtype=bool)
    keep[1:] = np.any(p[1:] != p[:-1], axis=1)
    pts = [tuple(q) for q in p[keep].tolist()]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    h = []
    for q in pts:
        while len(h) >= 2 and cross(h[-2], h[-1], q) <= 0:
            h.pop()
        h.append(q)
    lower = len(h) + 1
    for q in reversed(pts[:-1]):
        while len(h) >= lower and cross(h[-2], h[-1], q) <= 0:
            h.pop()
        h.append(q)
    if len(h) > 1:
        h.pop()
    return np.array(h, dtype=float).reshape(-1, 2)


def min_area_rect(xy):
    """(cx, cy, extent_a, extent_b, angle_a) of the minimum-area enclosing rectangle."""
    h = convex_hull_2d(xy)
    if len(h) == 0:
        raise ValueError("min_area_rect needs at least one point")
    if len(h) == 1:
        return float(h[0, 0]), float(h[0, 1]), 0.0, 0.0, 0.0
    e = np.roll(h, -1, axis=0) - h
    half_pi = 0.5 * np.pi
    ang = np.fmod(np.arctan2(e[:, 1], e[:, 0]), half_pi)
    ang = np.where(ang < 0, ang + half_pi, ang)
    ang = np.where(ang >= half_pi, ang - half_pi, ang)
    ca, sa = np.cos(ang), np.sin(ang)
    u = h[:, 0][None, :] * ca[:, None] + h[:, 1][None, :] * sa[:, None]
    v = -h[:, 0][None, :] * sa[:, None] + h[:, 1][None, :] * ca[:, None]
    u0, u1, v0, v1 = u.min(axis=1), u.max(axis=1), v.min(axis=1), v.max(axis=1)
    area = (u1 - u0) * (v1 - v0)
    k = int(np.flatnonzero(area <= area.min() * (1.0 + 1e-12) + 1e-15)[0])
    a = float(ang[k])
    c, s = np.cos(a), np.sin(a)
    uc, vc = 0.5 * (u0[k] + u1[k]), 0.5 * (v0[k] + v1[k])
    return float(uc * c - vc * s), float(uc * s + vc * c), float(u1[k] - u0[k]), float(v1[k] - v0[k]), a
