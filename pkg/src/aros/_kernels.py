"""Numba kernels backing the mesh query structures.

Everything here operates on flat numpy arrays so the hot loops compile to
machine code. The BVH layout is a balanced binary tree over a Morton-sorted
primitive order: node i covers a contiguous slice of `prim_order`; leaves
store (start, count), internal nodes store child indices. Children always
have larger indices than their parent, so bounds can be filled in a single
reverse sweep.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LEAF_SIZE = 4
_STACK = 128


@njit(cache=True, nogil=True)
def build_topology(n_prims, leaf_size):
    """Allocate the balanced range tree. Returns (lo_idx, hi_idx, left, right).

    Leaves have left == -1 and cover prim_order[lo:hi].
    """
    max_nodes = 4 * (n_prims // leaf_size + 2)
    lo = np.empty(max_nodes, dtype=np.int64)
    hi = np.empty(max_nodes, dtype=np.int64)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)

    stack = np.empty((_STACK, 3), dtype=np.int64)  # (node, lo, hi)
    n_nodes = 1
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n_prims
    while top >= 0:
        node = stack[top, 0]
        a = stack[top, 1]
        b = stack[top, 2]
        top -= 1
        lo[node] = a
        hi[node] = b
        if b - a > leaf_size:
            mid = (a + b) // 2
            lc = n_nodes
            rc = n_nodes + 1
            n_nodes += 2
            left[node] = lc
            right[node] = rc
            top += 1
            stack[top, 0] = lc
            stack[top, 1] = a
            stack[top, 2] = mid
            top += 1
            stack[top, 0] = rc
            stack[top, 1] = mid
            stack[top, 2] = b
    return lo[:n_nodes], hi[:n_nodes], left[:n_nodes], right[:n_nodes]


@njit(cache=True, nogil=True)
def fill_bounds(lo, hi, left, right, prim_order, prim_lo, prim_hi):
    """Compute node AABBs bottom-up (children have larger indices)."""
    n = lo.shape[0]
    node_lo = np.empty((n, 3), dtype=np.float64)
    node_hi = np.empty((n, 3), dtype=np.float64)
    for i in range(n - 1, -1, -1):
        if left[i] < 0:
            for k in range(3):
                node_lo[i, k] = np.inf
                node_hi[i, k] = -np.inf
            for j in range(lo[i], hi[i]):
                p = prim_order[j]
                for k in range(3):
                    if prim_lo[p, k] < node_lo[i, k]:
                        node_lo[i, k] = prim_lo[p, k]
                    if prim_hi[p, k] > node_hi[i, k]:
                        node_hi[i, k] = prim_hi[p, k]
        else:
            a = left[i]
            b = right[i]
            for k in range(3):
                node_lo[i, k] = min(node_lo[a, k], node_lo[b, k])
                node_hi[i, k] = max(node_hi[a, k], node_hi[b, k])
    return node_lo, node_hi


@njit(cache=True, nogil=True, inline="always")
def _ray_box(blo, bhi, o, d, t_hi):
    """Slab test: does the ray segment (0, t_hi] touch the box?"""
    t0 = 0.0
    t1 = t_hi
    for k in range(3):
        dk = d[k]
        if dk > 1e-300 or dk < -1e-300:
            inv = 1.0 / dk
            ta = (blo[k] - o[k]) * inv
            tb = (bhi[k] - o[k]) * inv
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
            if t0 > t1:
                return False
        else:
            if o[k] < blo[k] or o[k] > bhi[k]:
                return False
    return True


@njit(cache=True, nogil=True, inline="always")
def _watertight_hit(tris, f, o, kx, ky, kz, sx, sy, sz):
    """Woop-style watertight ray/triangle test. Returns t or -1."""
    ax = tris[f, 0, kx] - o[kx]
    ay = tris[f, 0, ky] - o[ky]
    az = tris[f, 0, kz] - o[kz]
    bx = tris[f, 1, kx] - o[kx]
    by = tris[f, 1, ky] - o[ky]
    bz = tris[f, 1, kz] - o[kz]
    cx = tris[f, 2, kx] - o[kx]
    cy = tris[f, 2, ky] - o[ky]
    cz = tris[f, 2, kz] - o[kz]

    axs = ax - sx * az
    ays = ay - sy * az
    bxs = bx - sx * bz
    bys = by - sy * bz
    cxs = cx - sx * cz
    cys = cy - sy * cz

    u = cxs * bys - cys * bxs
    v = axs * cys - ays * cxs
    w = bxs * ays - bys * axs

    if (u < 0.0 or v < 0.0 or w < 0.0) and (u > 0.0 or v > 0.0 or w > 0.0):
        return -1.0
    det = u + v + w
    if det == 0.0:
        return -1.0
    t = (u * sz * az + v * sz * bz + w * sz * cz) / det
    return t


@njit(cache=True, nogil=True)
def raycast(tris, node_lo, node_hi, lo, hi, left, right, prim_order,
            origins, dirs, max_ts, t_min):
    """First-hit raycast for a batch of rays. Returns (t, face); face -1 = miss."""
    n_rays = origins.shape[0]
    out_t = np.full(n_rays, -1.0, dtype=np.float64)
    out_f = np.full(n_rays, -1, dtype=np.int64)
    stack = np.empty(_STACK, dtype=np.int64)
    o = np.empty(3, dtype=np.float64)
    d = np.empty(3, dtype=np.float64)
    for r in range(n_rays):
        for k in range(3):
            o[k] = origins[r, k]
            d[k] = dirs[r, k]
        adx = abs(d[0])
        ady = abs(d[1])
        adz = abs(d[2])
        if adz >= adx and adz >= ady:
            kz = 2
        elif ady >= adx:
            kz = 1
        else:
            kz = 0
        kx = (kz + 1) % 3
        ky = (kx + 1) % 3
        if d[kz] < 0.0:
            kx, ky = ky, kx
        sx = d[kx] / d[kz]
        sy = d[ky] / d[kz]
        sz = 1.0 / d[kz]

        best_t = max_ts[r]
        best_f = -1
        top = 0
        stack[0] = 0
        while top >= 0:
            node = stack[top]
            top -= 1
            if not _ray_box(node_lo[node], node_hi[node], o, d, best_t):
                continue
            if left[node] < 0:
                for j in range(lo[node], hi[node]):
                    f = prim_order[j]
                    t = _watertight_hit(tris, f, o, kx, ky, kz, sx, sy, sz)
                    if t > t_min and t <= best_t:
                        best_t = t
                        best_f = f
            else:
                top += 1
                stack[top] = left[node]
                top += 1
                stack[top] = right[node]
        if best_f >= 0:
            out_t[r] = best_t
            out_f[r] = best_f
    return out_t, out_f


@njit(cache=True, nogil=True, inline="always")
def _box_sq_dist(blo, bhi, q):
    d = 0.0
    for k in range(3):
        if q[k] < blo[k]:
            d += (blo[k] - q[k]) ** 2
        elif q[k] > bhi[k]:
            d += (q[k] - bhi[k]) ** 2
    return d


@njit(cache=True, nogil=True, inline="always")
def _tri_closest(tris, f, px, py, pz):
    """Closest point on triangle f to p (Ericson region walk). Returns (d2, x, y, z)."""
    ax = tris[f, 0, 0]
    ay = tris[f, 0, 1]
    az = tris[f, 0, 2]
    bx = tris[f, 1, 0]
    by = tris[f, 1, 1]
    bz = tris[f, 1, 2]
    cx = tris[f, 2, 0]
    cy = tris[f, 2, 1]
    cz = tris[f, 2, 2]

    abx = bx - ax
    aby = by - ay
    abz = bz - az
    acx = cx - ax
    acy = cy - ay
    acz = cz - az
    apx = px - ax
    apy = py - ay
    apz = pz - az

    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        qx, qy, qz = ax, ay, az
    else:
        bpx = px - bx
        bpy = py - by
        bpz = pz - bz
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            qx, qy, qz = bx, by, bz
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                v = d1 / (d1 - d3)
                qx = ax + v * abx
                qy = ay + v * aby
                qz = az + v * abz
            else:
                cpx = px - cx
                cpy = py - cy
                cpz = pz - cz
                d5 = abx * cpx + aby * cpy + abz * cpz
                d6 = acx * cpx + acy * cpy + acz * cpz
                if d6 >= 0.0 and d5 <= d6:
                    qx, qy, qz = cx, cy, cz
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                        w = d2 / (d2 - d6)
                        qx = ax + w * acx
                        qy = ay + w * acy
                        qz = az + w * acz
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                            w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                            qx = bx + w * (cx - bx)
                            qy = by + w * (cy - by)
                            qz = bz + w * (cz - bz)
                        else:
                            denom = 1.0 / (va + vb + vc)
                            v = vb * denom
                            w = vc * denom
                            qx = ax + abx * v + acx * w
                            qy = ay + aby * v + acy * w
                            qz = az + abz * v + acz * w
    dx = px - qx
    dy = py - qy
    dz = pz - qz
    return dx * dx + dy * dy + dz * dz, qx, qy, qz


@njit(cache=True, nogil=True)
def closest_point(tris, node_lo, node_hi, lo, hi, left, right, prim_order, queries):
    """Exact closest point on the mesh for each query. Returns (dist, point, face)."""
    n = queries.shape[0]
    out_d = np.empty(n, dtype=np.float64)
    out_p = np.empty((n, 3), dtype=np.float64)
    out_f = np.empty(n, dtype=np.int64)
    stack = np.empty(_STACK, dtype=np.int64)
    q = np.empty(3, dtype=np.float64)
    for r in range(n):
        for k in range(3):
            q[k] = queries[r, k]
        best = np.inf
        bx = 0.0
        by = 0.0
        bz = 0.0
        bf = -1
        top = 0
        stack[0] = 0
        while top >= 0:
            node = stack[top]
            top -= 1
            if _box_sq_dist(node_lo[node], node_hi[node], q) >= best:
                continue
            if left[node] < 0:
                for j in range(lo[node], hi[node]):
                    f = prim_order[j]
                    d2, cx, cy, cz = _tri_closest(tris, f, q[0], q[1], q[2])
                    if d2 < best:
                        best = d2
                        bx, by, bz = cx, cy, cz
                        bf = f
            else:
                a = left[node]
                b = right[node]
                da = _box_sq_dist(node_lo[a], node_hi[a], q)
                db = _box_sq_dist(node_lo[b], node_hi[b], q)
                # push farther child first so the nearer one is processed next
                if da <= db:
                    top += 1
                    stack[top] = b
                    top += 1
                    stack[top] = a
                else:
                    top += 1
                    stack[top] = a
                    top += 1
                    stack[top] = b
        out_d[r] = np.sqrt(best)
        out_p[r, 0] = bx
        out_p[r, 1] = by
        out_p[r, 2] = bz
        out_f[r] = bf
    return out_d, out_p, out_f


@njit(cache=True, nogil=True)
def signed_distance(tris, node_lo, node_hi, lo, hi, left, right, prim_order,
                    face_normals, edge_normals, corner_normals, queries):
    """Pseudonormal-signed distance: negative behind the surface.

    edge_normals[f, e] is the normal for edge e of face f with the corner
    order (0-1, 1-2, 2-0); corner_normals[f, c] the angle-weighted vertex
    normal at corner c.
    """
    dist, pts, faces = closest_point(tris, node_lo, node_hi, lo, hi, left,
                                     right, prim_order, queries)
    n = queries.shape[0]
    out = np.empty(n, dtype=np.float64)
    for r in range(n):
        f = faces[r]
        qx = queries[r, 0] - pts[r, 0]
        qy = queries[r, 1] - pts[r, 1]
        qz = queries[r, 2] - pts[r, 2]
        # barycentric coordinates of the closest point
        ax = tris[f, 0, 0]
        ay = tris[f, 0, 1]
        az = tris[f, 0, 2]
        v0x = tris[f, 1, 0] - ax
        v0y = tris[f, 1, 1] - ay
        v0z = tris[f, 1, 2] - az
        v1x = tris[f, 2, 0] - ax
        v1y = tris[f, 2, 1] - ay
        v1z = tris[f, 2, 2] - az
        v2x = pts[r, 0] - ax
        v2y = pts[r, 1] - ay
        v2z = pts[r, 2] - az
        d00 = v0x * v0x + v0y * v0y + v0z * v0z
        d01 = v0x * v1x + v0y * v1y + v0z * v1z
        d11 = v1x * v1x + v1y * v1y + v1z * v1z
        d20 = v2x * v0x + v2y * v0y + v2z * v0z
        d21 = v2x * v1x + v2y * v1y + v2z * v1z
        denom = d00 * d11 - d01 * d01
        if denom <= 0.0:
            v = 0.0
            w = 0.0
        else:
            v = (d11 * d20 - d01 * d21) / denom
            w = (d00 * d21 - d01 * d20) / denom
        u = 1.0 - v - w
        tol = 1e-9
        z0 = u < tol
        z1 = v < tol
        z2 = w < tol
        if z1 and z2:
            nx = corner_normals[f, 0, 0]
            ny = corner_normals[f, 0, 1]
            nz = corner_normals[f, 0, 2]
        elif z0 and z2:
            nx = corner_normals[f, 1, 0]
            ny = corner_normals[f, 1, 1]
            nz = corner_normals[f, 1, 2]
        elif z0 and z1:
            nx = corner_normals[f, 2, 0]
            ny = corner_normals[f, 2, 1]
            nz = corner_normals[f, 2, 2]
        elif z2:
            nx = edge_normals[f, 0, 0]
            ny = edge_normals[f, 0, 1]
            nz = edge_normals[f, 0, 2]
        elif z0:
            nx = edge_normals[f, 1, 0]
            ny = edge_normals[f, 1, 1]
            nz = edge_normals[f, 1, 2]
        elif z1:
            nx = edge_normals[f, 2, 0]
            ny = edge_normals[f, 2, 1]
            nz = edge_normals[f, 2, 2]
        else:
            nx = face_normals[f, 0]
            ny = face_normals[f, 1]
            nz = face_normals[f, 2]
        s = qx * nx + qy * ny + qz * nz
        if s > 0.0:
            out[r] = dist[r]
        elif s < 0.0:
            out[r] = -dist[r]
        else:
            out[r] = 0.0
    return out


@njit(cache=True, nogil=True)
def box_query_pairs(node_lo, node_hi, lo, hi, left, right, prim_order,
                    q_lo, q_hi, cap):
    """All (tree primitive, query box) index pairs with overlapping AABBs.

    Returns (pairs, count); count == -1 signals the `cap` buffer overflowed.
    """
    pairs = np.empty((cap, 2), dtype=np.int64)
    cnt = 0
    stack = np.empty(_STACK, dtype=np.int64)
    for j in range(q_lo.shape[0]):
        top = 0
        stack[0] = 0
        while top >= 0:
            node = stack[top]
            top -= 1
            ok = True
            for k in range(3):
                if node_lo[node, k] > q_hi[j, k] or node_hi[node, k] < q_lo[j, k]:
                    ok = False
                    break
            if not ok:
                continue
            if left[node] < 0:
                for i in range(lo[node], hi[node]):
                    if cnt >= cap:
                        return pairs, -1
                    pairs[cnt, 0] = prim_order[i]
                    pairs[cnt, 1] = j
                    cnt += 1
            else:
                top += 1
                stack[top] = left[node]
                top += 1
                stack[top] = right[node]
    return pairs, cnt


@njit(cache=True, nogil=True, inline="always")
def _plane_line_cross(px, py, pz, qx, qy, qz, dp, dq):
    """Point where the segment p-q crosses the plane (dp, dq signed dists)."""
    t = dp / (dp - dq)
    return px + t * (qx - px), py + t * (qy - py), pz + t * (qz - pz)


@njit(cache=True, nogil=True)
def tri_tri_segments(tris_a, tris_b, pairs, n_pairs):
    """Möller interval test per candidate pair; emits intersection segments.

    Returns (hit flags, segment endpoints (n,2,3)). Tangential contact
    (a vertex exactly on the other plane) does not count as a hit.
    """
    hits = np.zeros(n_pairs, dtype=np.bool_)
    segs = np.zeros((n_pairs, 2, 3), dtype=np.float64)
    eps = 1e-12
    pax = np.empty(2, dtype=np.float64)
    pay = np.empty(2, dtype=np.float64)
    paz = np.empty(2, dtype=np.float64)
    pbx = np.empty(2, dtype=np.float64)
    pby = np.empty(2, dtype=np.float64)
    pbz = np.empty(2, dtype=np.float64)
    for idx in range(n_pairs):
        fa = pairs[idx, 0]
        fb = pairs[idx, 1]

        # plane of B
        e1x = tris_b[fb, 1, 0] - tris_b[fb, 0, 0]
        e1y = tris_b[fb, 1, 1] - tris_b[fb, 0, 1]
        e1z = tris_b[fb, 1, 2] - tris_b[fb, 0, 2]
        e2x = tris_b[fb, 2, 0] - tris_b[fb, 0, 0]
        e2y = tris_b[fb, 2, 1] - tris_b[fb, 0, 1]
        e2z = tris_b[fb, 2, 2] - tris_b[fb, 0, 2]
        n2x = e1y * e2z - e1z * e2y
        n2y = e1z * e2x - e1x * e2z
        n2z = e1x * e2y - e1y * e2x
        nb = np.sqrt(n2x * n2x + n2y * n2y + n2z * n2z)
        if nb <= 0.0:
            continue
        n2x /= nb
        n2y /= nb
        n2z /= nb
        d2 = -(n2x * tris_b[fb, 0, 0] + n2y * tris_b[fb, 0, 1] + n2z * tris_b[fb, 0, 2])

        da0 = n2x * tris_a[fa, 0, 0] + n2y * tris_a[fa, 0, 1] + n2z * tris_a[fa, 0, 2] + d2
        da1 = n2x * tris_a[fa, 1, 0] + n2y * tris_a[fa, 1, 1] + n2z * tris_a[fa, 1, 2] + d2
        da2 = n2x * tris_a[fa, 2, 0] + n2y * tris_a[fa, 2, 1] + n2z * tris_a[fa, 2, 2] + d2
        if (da0 >= -eps and da1 >= -eps and da2 >= -eps) or \
           (da0 <= eps and da1 <= eps and da2 <= eps):
            continue

        # plane of A
        f1x = tris_a[fa, 1, 0] - tris_a[fa, 0, 0]
        f1y = tris_a[fa, 1, 1] - tris_a[fa, 0, 1]
        f1z = tris_a[fa, 1, 2] - tris_a[fa, 0, 2]
        f2x = tris_a[fa, 2, 0] - tris_a[fa, 0, 0]
        f2y = tris_a[fa, 2, 1] - tris_a[fa, 0, 1]
        f2z = tris_a[fa, 2, 2] - tris_a[fa, 0, 2]
        n1x = f1y * f2z - f1z * f2y
        n1y = f1z * f2x - f1x * f2z
        n1z = f1x * f2y - f1y * f2x
        na = np.sqrt(n1x * n1x + n1y * n1y + n1z * n1z)
        if na <= 0.0:
            continue
        n1x /= na
        n1y /= na
        n1z /= na
        d1 = -(n1x * tris_a[fa, 0, 0] + n1y * tris_a[fa, 0, 1] + n1z * tris_a[fa, 0, 2])

        db0 = n1x * tris_b[fb, 0, 0] + n1y * tris_b[fb, 0, 1] + n1z * tris_b[fb, 0, 2] + d1
        db1 = n1x * tris_b[fb, 1, 0] + n1y * tris_b[fb, 1, 1] + n1z * tris_b[fb, 1, 2] + d1
        db2 = n1x * tris_b[fb, 2, 0] + n1y * tris_b[fb, 2, 1] + n1z * tris_b[fb, 2, 2] + d1
        if (db0 >= -eps and db1 >= -eps and db2 >= -eps) or \
           (db0 <= eps and db1 <= eps and db2 <= eps):
            continue

        # intersection line direction; project on the dominant axis
        lx = n1y * n2z - n1z * n2y
        ly = n1z * n2x - n1x * n2z
        lz = n1x * n2y - n1y * n2x
        al = abs(lx)
        am = abs(ly)
        an = abs(lz)
        if al < 1e-14 and am < 1e-14 and an < 1e-14:
            continue  # near-coplanar: tangential, skip

        # crossing points of A's edges with plane B (exactly two)
        c = 0
        for e in range(3):
            i0 = e
            i1 = (e + 1) % 3
            if e == 0:
                dd0, dd1 = da0, da1
            elif e == 1:
                dd0, dd1 = da1, da2
            else:
                dd0, dd1 = da2, da0
            if (dd0 > eps and dd1 < -eps) or (dd0 < -eps and dd1 > eps):
                if c < 2:
                    x, y, z = _plane_line_cross(
                        tris_a[fa, i0, 0], tris_a[fa, i0, 1], tris_a[fa, i0, 2],
                        tris_a[fa, i1, 0], tris_a[fa, i1, 1], tris_a[fa, i1, 2],
                        dd0, dd1)
                    pax[c] = x
                    pay[c] = y
                    paz[c] = z
                    c += 1
        if c < 2:
            continue

        c2 = 0
        for e in range(3):
            i0 = e
            i1 = (e + 1) % 3
            if e == 0:
                dd0, dd1 = db0, db1
            elif e == 1:
                dd0, dd1 = db1, db2
            else:
                dd0, dd1 = db2, db0
            if (dd0 > eps and dd1 < -eps) or (dd0 < -eps and dd1 > eps):
                if c2 < 2:
                    x, y, z = _plane_line_cross(
                        tris_b[fb, i0, 0], tris_b[fb, i0, 1], tris_b[fb, i0, 2],
                        tris_b[fb, i1, 0], tris_b[fb, i1, 1], tris_b[fb, i1, 2],
                        dd0, dd1)
                    pbx[c2] = x
                    pby[c2] = y
                    pbz[c2] = z
                    c2 += 1
        if c2 < 2:
            continue

        if al >= am and al >= an:
            ta0, ta1 = pax[0], pax[1]
            tb0, tb1 = pbx[0], pbx[1]
        elif am >= an:
            ta0, ta1 = pay[0], pay[1]
            tb0, tb1 = pby[0], pby[1]
        else:
            ta0, ta1 = paz[0], paz[1]
            tb0, tb1 = pbz[0], pbz[1]

        if ta0 > ta1:
            ta0, ta1 = ta1, ta0
            pax[0], pax[1] = pax[1], pax[0]
            pay[0], pay[1] = pay[1], pay[0]
            paz[0], paz[1] = paz[1], paz[0]
        if tb0 > tb1:
            tb0, tb1 = tb1, tb0
            pbx[0], pbx[1] = pbx[1], pbx[0]
            pby[0], pby[1] = pby[1], pby[0]
            pbz[0], pbz[1] = pbz[1], pbz[0]

        s = ta0 if ta0 >= tb0 else tb0
        e_ = ta1 if ta1 <= tb1 else tb1
        if e_ - s <= eps:
            continue

        if ta0 >= tb0:
            segs[idx, 0, 0] = pax[0]
            segs[idx, 0, 1] = pay[0]
            segs[idx, 0, 2] = paz[0]
        else:
            segs[idx, 0, 0] = pbx[0]
            segs[idx, 0, 1] = pby[0]
            segs[idx, 0, 2] = pbz[0]
        if ta1 <= tb1:
            segs[idx, 1, 0] = pax[1]
            segs[idx, 1, 1] = pay[1]
            segs[idx, 1, 2] = paz[1]
        else:
            segs[idx, 1, 0] = pbx[1]
            segs[idx, 1, 1] = pby[1]
            segs[idx, 1, 2] = pbz[1]
        hits[idx] = True
    return hits, segs
