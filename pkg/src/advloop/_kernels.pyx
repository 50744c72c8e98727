# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: BVH ray traversal, ray/triangle tests, mesh distance.

The numpy twins live in :mod:`advloop._fallback`; both follow the same
arithmetic sequence so results agree to rounding.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, atan2, cos, sin, fmod, INFINITY, NAN, M_PI

cnp.import_array()

cdef enum:
    STACK_SIZE = 128


cdef inline double _ray_tri(double ox, double oy, double oz,
                            double dx, double dy, double dz,
                            const double* tri) noexcept nogil:
    cdef double e1x = tri[3] - tri[0]
    cdef double e1y = tri[4] - tri[1]
    cdef double e1z = tri[5] - tri[2]
    cdef double e2x = tri[6] - tri[0]
    cdef double e2y = tri[7] - tri[1]
    cdef double e2z = tri[8] - tri[2]
    cdef double px = dy * e2z - dz * e2y
    cdef double py = dz * e2x - dx * e2z
    cdef double pz = dx * e2y - dy * e2x
    cdef double det = e1x * px + e1y * py + e1z * pz
    cdef double tol = 1e-12 * sqrt((e1x * e1x + e1y * e1y + e1z * e1z)
                                   * (e2x * e2x + e2y * e2y + e2z * e2z)
                                   * (dx * dx + dy * dy + dz * dz))
    if fabs(det) <= tol:
        return NAN
    cdef double inv = 1.0 / det
    cdef double sx = ox - tri[0]
    cdef double sy = oy - tri[1]
    cdef double sz = oz - tri[2]
    cdef double u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return NAN
    cdef double qx = sy * e1z - sz * e1y
    cdef double qy = sz * e1x - sx * e1z
    cdef double qz = sx * e1y - sy * e1x
    cdef double v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return NAN
    cdef double t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t < 0.0:
        return NAN
    return t


cdef inline bint _slab(double ox, double oy, double oz,
                       double dx, double dy, double dz,
                       const double* lo, const double* hi,
                       double tmax) noexcept nogil:
    cdef double t0 = 0.0
    cdef double t1 = tmax
    cdef double a, b, tmp, o, d
    cdef int k
    for k in range(3):
        if k == 0:
            o = ox; d = dx
        elif k == 1:
            o = oy; d = dy
        else:
            o = oz; d = dz
        if fabs(d) < 1e-300:
            if o < lo[k] or o > hi[k]:
                return False
            continue
        a = (lo[k] - o) / d
        b = (hi[k] - o) / d
        if a > b:
            tmp = a; a = b; b = tmp
        if a > t0:
            t0 = a
        if b < t1:
            t1 = b
        if t0 > t1:
            return False
    return True


cdef inline bint _slab_inv(double ox, double oy, double oz,
                           double ix, double iy, double iz,
                           const double* lo, const double* hi,
                           double tmax) noexcept nogil:
    """Slab test with precomputed reciprocal directions (inf for a zero component)."""
    cdef double t0 = 0.0
    cdef double t1 = tmax
    cdef double a, b, tmp, o, inv
    cdef int k
    for k in range(3):
        if k == 0:
            o = ox; inv = ix
        elif k == 1:
            o = oy; inv = iy
        else:
            o = oz; inv = iz
        if inv == INFINITY or inv == -INFINITY:
            if o < lo[k] or o > hi[k]:
                return False
            continue
        a = (lo[k] - o) * inv
        b = (hi[k] - o) * inv
        if a > b:
            tmp = a; a = b; b = tmp
        if a > t0:
            t0 = a
        if b < t1:
            t1 = b
        if t0 > t1:
            return False
    return True


cdef inline double _recip(double d) noexcept nogil:
    if fabs(d) < 1e-300:
        return INFINITY
    return 1.0 / d


def ray_triangle(double[:] origin, double[:] direction, double[:, ::1] tri):
    """Nearest t >= 0 of the ray against one triangle, or None."""
    cdef double t = _ray_tri(origin[0], origin[1], origin[2],
                             direction[0], direction[1], direction[2], &tri[0, 0])
    if t != t:
        return None
    return t


def ray_triangle_batch(double[:, :] origins, double[:, :] dirs, double[:, :, ::1] tris):
    cdef Py_ssize_t n = origins.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[:] o = out
    with nogil:
        for i in range(n):
            o[i] = _ray_tri(origins[i, 0], origins[i, 1], origins[i, 2],
                            dirs[i, 0], dirs[i, 1], dirs[i, 2], &tris[i, 0, 0])
    return out


def raycast_bvh(double[:] origin, double[:, :] dirs, double[:, :, ::1] tris,
                double[:, ::1] node_lo, double[:, ::1] node_hi,
                int[:] node_left, int[:] node_right,
                int[:] node_start, int[:] node_count,
                double[:] t_best, int[:] hit_tag, int tag):
    """Traverse one mesh BVH for every ray, lowering ``t_best`` in place."""
    cdef Py_ssize_t n = dirs.shape[0], i
    cdef int stack[STACK_SIZE]
    cdef int sp, node, j, left, right
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef double dx, dy, dz, t
    with nogil:
        for i in range(n):
            dx = dirs[i, 0]; dy = dirs[i, 1]; dz = dirs[i, 2]
            sp = 0
            stack[sp] = 0
            sp += 1
            while sp > 0:
                sp -= 1
                node = stack[sp]
                if not _slab(ox, oy, oz, dx, dy, dz, &node_lo[node, 0], &node_hi[node, 0], t_best[i]):
                    continue
                left = node_left[node]
                if left < 0:
                    for j in range(node_start[node], node_start[node] + node_count[node]):
                        t = _ray_tri(ox, oy, oz, dx, dy, dz, &tris[j, 0, 0])
                        if t == t and t < t_best[i]:
                            t_best[i] = t
                            hit_tag[i] = tag
                else:
                    right = node_right[node]
                    if sp + 2 > STACK_SIZE:
                        # depth overflow cannot happen for median splits of < 2**100 triangles
                        continue
                    stack[sp] = right
                    sp += 1
                    stack[sp] = left
                    sp += 1


def raycast_scene(double[:] origin, double[:, :] dirs,
                  double[:] cos_yaw, double[:] sin_yaw, double[:, :] trans,
                  double[:, ::1] box_lo, double[:, ::1] box_hi,
                  int[:] node_offset, int[:] tri_offset,
                  double[:, :, ::1] tris, double[:, ::1] node_lo, double[:, ::1] node_hi,
                  int[:] node_left, int[:] node_right,
                  int[:] node_start, int[:] node_count,
                  double[:] t_best, int[:] hit_tag):
    """Two-level traversal: world AABB per instance, then its BVH in the local frame.

    Node links and triangle starts are local to each instance and shifted by
    ``node_offset`` / ``tri_offset``.
    """
    cdef Py_ssize_t n = dirs.shape[0], m = cos_yaw.shape[0], i, q
    cdef int stack[STACK_SIZE]
    cdef int sp, node, j, left, right, noff, toff
    cdef double wx = origin[0], wy = origin[1], wz = origin[2]
    cdef double ox, oy, oz, dx, dy, dz, c, s, rx, ry, t, ix, iy
    inv_arr = np.empty((n, 3), dtype=np.float64)
    cdef double[:, :] inv = inv_arr
    with nogil:
        for i in range(n):
            inv[i, 0] = _recip(dirs[i, 0])
            inv[i, 1] = _recip(dirs[i, 1])
            inv[i, 2] = _recip(dirs[i, 2])
        for q in range(m):
            c = cos_yaw[q]
            s = sin_yaw[q]
            rx = wx - trans[q, 0]
            ry = wy - trans[q, 1]
            ox = c * rx + s * ry
            oy = -s * rx + c * ry
            oz = wz - trans[q, 2]
            noff = node_offset[q]
            toff = tri_offset[q]
            for i in range(n):
                if not _slab_inv(wx, wy, wz, inv[i, 0], inv[i, 1], inv[i, 2],
                                 &box_lo[q, 0], &box_hi[q, 0], t_best[i]):
                    continue
                dx = c * dirs[i, 0] + s * dirs[i, 1]
                dy = -s * dirs[i, 0] + c * dirs[i, 1]
                dz = dirs[i, 2]
                ix = _recip(dx)
                iy = _recip(dy)
                sp = 0
                stack[sp] = noff
                sp += 1
                while sp > 0:
                    sp -= 1
                    node = stack[sp]
                    if not _slab_inv(ox, oy, oz, ix, iy, inv[i, 2], &node_lo[node, 0], &node_hi[node, 0], t_best[i]):
                        continue
                    left = node_left[node]
                    if left < 0:
                        for j in range(toff + node_start[node], toff + node_start[node] + node_count[node]):
                            t = _ray_tri(ox, oy, oz, dx, dy, dz, &tris[j, 0, 0])
                            if t == t and t < t_best[i]:
                                t_best[i] = t
                                hit_tag[i] = <int>q
                    else:
                        right = node_right[node]
                        if sp + 2 > STACK_SIZE:
                            continue
                        stack[sp] = noff + right
                        sp += 1
                        stack[sp] = noff + left
                        sp += 1


def raycast_brute(double[:] origin, double[:, :] dirs, double[:, :, ::1] tris,
                  double[:] t_best, int[:] hit_tag, int tag):
    """Exhaustive per-ray scan over every triangle (oracle path)."""
    cdef Py_ssize_t n = dirs.shape[0], m = tris.shape[0], i, j
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef double t
    with nogil:
        for i in range(n):
            for j in range(m):
                t = _ray_tri(ox, oy, oz, dirs[i, 0], dirs[i, 1], dirs[i, 2], &tris[j, 0, 0])
                if t == t and t < t_best[i]:
                    t_best[i] = t
                    hit_tag[i] = tag


cdef inline double _dot(double ax, double ay, double az,
                        double bx, double by, double bz) noexcept nogil:
    return ax * bx + ay * by + az * bz


cdef double _point_tri_dist2(double px, double py, double pz,
                             const double* tri) noexcept nogil:
    # closest point on triangle, Voronoi-region walk
    cdef double ax = tri[0], ay = tri[1], az = tri[2]
    cdef double abx = tri[3] - ax, aby = tri[4] - ay, abz = tri[5] - az
    cdef double acx = tri[6] - ax, acy = tri[7] - ay, acz = tri[8] - az
    cdef double apx = px - ax, apy = py - ay, apz = pz - az
    cdef double d1 = _dot(abx, aby, abz, apx, apy, apz)
    cdef double d2 = _dot(acx, acy, acz, apx, apy, apz)
    cdef double cx, cy, cz, v, w, denom
    if d1 <= 0.0 and d2 <= 0.0:
        cx = ax; cy = ay; cz = az
        return (px - cx) ** 2 + (py - cy) ** 2 + (pz - cz) ** 2
    cdef double bpx = px - tri[3], bpy = py - tri[4], bpz = pz - tri[5]
    cdef double d3 = _dot(abx, aby, abz, bpx, bpy, bpz)
    cdef double d4 = _dot(acx, acy, acz, bpx, bpy, bpz)
    if d3 >= 0.0 and d4 <= d3:
        return bpx * bpx + bpy * bpy + bpz * bpz
    cdef double vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        cx = ax + v * abx; cy = ay + v * aby; cz = az + v * abz
        return (px - cx) ** 2 + (py - cy) ** 2 + (pz - cz) ** 2
    cdef double cpx = px - tri[6], cpy = py - tri[7], cpz = pz - tri[8]
    cdef double d5 = _dot(abx, aby, abz, cpx, cpy, cpz)
    cdef double d6 = _dot(acx, acy, acz, cpx, cpy, cpz)
    if d6 >= 0.0 and d5 <= d6:
        return cpx * cpx + cpy * cpy + cpz * cpz
    cdef double vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        cx = ax + w * acx; cy = ay + w * acy; cz = az + w * acz
        return (px - cx) ** 2 + (py - cy) ** 2 + (pz - cz) ** 2
    cdef double va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        cx = tri[3] + w * (tri[6] - tri[3])
        cy = tri[4] + w * (tri[7] - tri[4])
        cz = tri[5] + w * (tri[8] - tri[5])
        return (px - cx) ** 2 + (py - cy) ** 2 + (pz - cz) ** 2
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    cx = ax + abx * v + acx * w
    cy = ay + aby * v + acy * w
    cz = az + abz * v + acz * w
    return (px - cx) ** 2 + (py - cy) ** 2 + (pz - cz) ** 2


def point_mesh_distance(double[:, :] points, double[:, :, :] tris):
    """Unsigned distance from each point to the nearest triangle."""
    cdef Py_ssize_t n = points.shape[0], m = tris.shape[0], i, j
    out = np.empty(n, dtype=np.float64)
    cdef double[:] o = out
    cdef double best, d
    with nogil:
        for i in range(n):
            best = INFINITY
            for j in range(m):
                d = _point_tri_dist2(points[i, 0], points[i, 1], points[i, 2], &tris[j, 0, 0])
                if d < best:
                    best = d
            o[i] = sqrt(best)
    return out


def winding_number(double[:, :] points, double[:, :, :] tris):
    """Generalized winding number of a closed mesh at each point."""
    cdef Py_ssize_t n = points.shape[0], m = tris.shape[0], i, j
    out = np.empty(n, dtype=np.float64)
    cdef double[:] o = out
    cdef double ax, ay, az, bx, by, bz, cx, cy, cz, la, lb, lc, num, den, acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(m):
                ax = tris[j, 0, 0] - points[i, 0]
                ay = tris[j, 0, 1] - points[i, 1]
                az = tris[j, 0, 2] - points[i, 2]
                bx = tris[j, 1, 0] - points[i, 0]
                by = tris[j, 1, 1] - points[i, 1]
                bz = tris[j, 1, 2] - points[i, 2]
                cx = tris[j, 2, 0] - points[i, 0]
                cy = tris[j, 2, 1] - points[i, 1]
                cz = tris[j, 2, 2] - points[i, 2]
                la = sqrt(ax * ax + ay * ay + az * az)
                lb = sqrt(bx * bx + by * by + bz * bz)
                lc = sqrt(cx * cx + cy * cy + cz * cz)
                num = ax * (by * cz - bz * cy) + ay * (bz * cx - bx * cz) + az * (bx * cy - by * cx)
                den = la * lb * lc + _dot(ax, ay, az, bx, by, bz) * lc \
                    + _dot(ax, ay, az, cx, cy, cz) * lb + _dot(bx, by, bz, cx, cy, cz) * la
                acc += 2.0 * atan2(num, den)
            o[i] = acc / (4.0 * M_PI)
    return out


cdef inline double _cross(double ox, double oy, double ax, double ay, double bx, double by) noexcept nogil:
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def convex_hull_2d(double[:, :] xy):
    """Monotone-chain hull, counter-clockwise from the lowest-x (then lowest-y) point.

    Collinear boundary points are dropped; returns an (h, 2) array.
    """
    cdef Py_ssize_t n = xy.shape[0]
    if n == 0:
        return np.zeros((0, 2))
    order = np.lexsort((np.asarray(xy[:, 1]), np.asarray(xy[:, 0])))
    cdef double[:, ::1] p = np.ascontiguousarray(np.asarray(xy)[order])
    out_arr = np.empty((2 * n + 1, 2))
    cdef double[:, ::1] h = out_arr
    cdef Py_ssize_t i, k = 0, lower
    for i in range(n):
        if i > 0 and p[i, 0] == p[i - 1, 0] and p[i, 1] == p[i - 1, 1]:
            continue
        while k >= 2 and _cross(h[k - 2, 0], h[k - 2, 1], h[k - 1, 0], h[k - 1, 1], p[i, 0], p[i, 1]) <= 0:
            k -= 1
        h[k, 0] = p[i, 0]
        h[k, 1] = p[i, 1]
        k += 1
    lower = k + 1
    for i in range(n - 2, -1, -1):
        if p[i, 0] == p[i + 1, 0] and p[i, 1] == p[i + 1, 1]:
            continue
        while k >= lower and _cross(h[k - 2, 0], h[k - 2, 1], h[k - 1, 0], h[k - 1, 1], p[i, 0], p[i, 1]) <= 0:
            k -= 1
        h[k, 0] = p[i, 0]
        h[k, 1] = p[i, 1]
        k += 1
    if k > 1:
        k -= 1      # last point repeats the first
    return out_arr[:k].copy()


def min_area_rect(double[:, :] xy):
    """(cx, cy, extent_a, extent_b, angle_a) of the minimum-area enclosing rectangle.

    Orientations are hull edge directions folded into [0, pi/2); the first
    minimum within a relative 1e-12 tolerance (hull order) wins.
    """
    hull_arr = convex_hull_2d(xy)
    cdef double[:, ::1] h = hull_arr
    cdef Py_ssize_t m = h.shape[0], i, e, best = -1
    if m == 0:
        raise ValueError("min_area_rect needs at least one point")
    if m == 1:
        return float(h[0, 0]), float(h[0, 1]), 0.0, 0.0, 0.0
    cdef double half_pi = 0.5 * M_PI
    areas_arr = np.empty(m)
    params_arr = np.empty((m, 5))
    cdef double[::1] areas = areas_arr
    cdef double[:, ::1] prm = params_arr
    cdef double ex, ey, a, c, s, u, v, u0, u1, v0, v1, amin = INFINITY
    for e in range(m):
        ex = h[(e + 1) % m, 0] - h[e, 0]
        ey = h[(e + 1) % m, 1] - h[e, 1]
        a = fmod(atan2(ey, ex), half_pi)
        if a < 0:
            a += half_pi
        if a >= half_pi:
            a -= half_pi
        c = cos(a)
        s = sin(a)
        u0 = INFINITY; u1 = -INFINITY; v0 = INFINITY; v1 = -INFINITY
        for i in range(m):
            u = h[i, 0] * c + h[i, 1] * s
            v = -h[i, 0] * s + h[i, 1] * c
            if u < u0: u0 = u
            if u > u1: u1 = u
            if v < v0: v0 = v
            if v > v1: v1 = v
        areas[e] = (u1 - u0) * (v1 - v0)
        prm[e, 0] = a; prm[e, 1] = u0; prm[e, 2] = u1; prm[e, 3] = v0; prm[e, 4] = v1
        if areas[e] < amin:
            amin = areas[e]
    for e in range(m):
        if areas[e] <= amin * (1.0 + 1e-12) + 1e-15:
            best = e
            break
    a = prm[best, 0]
    c = cos(a)
    s = sin(a)
    u = 0.5 * (prm[best, 1] + prm[best, 2])
    v = 0.5 * (prm[best, 3] + prm[best, 4])
    return u * c - v * s, u * s + v * c, prm[best, 2] - prm[best, 1], prm[best, 4] - prm[best, 3], a
