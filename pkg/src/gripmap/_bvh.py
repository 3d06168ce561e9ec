"""Flat-array bounding volume hierarchy and JIT ray/closest-point kernels.

The BVH is built once per mesh in numpy (median split on the longest
centroid axis) and stored as flat arrays so the numba kernels can walk it
with a manual stack. Kernels are cached to disk, so the JIT cost is paid
once per interpreter/machine, not per process run.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np
from numba import njit

_LEAF_SIZE = 8
_DET_EPS = 1e-12
_BARY_EPS = 1e-12


@dataclass(frozen=True)
class FlatBVH:
    node_lo: np.ndarray     # (n, 3) AABB min corner
    node_hi: np.ndarray     # (n, 3) AABB max corner
    node_left: np.ndarray   # (n,) child index, -1 for leaves
    node_right: np.ndarray  # (n,)
    leaf_start: np.ndarray  # (n,) offset into tri_order
    leaf_count: np.ndarray  # (n,) 0 for internal nodes
    tri_order: np.ndarray   # (m,) triangle indices grouped by leaf


def build_bvh(vertices: np.ndarray, triangles: np.ndarray) -> FlatBVH:
    tv = vertices[triangles]
    tri_lo = tv.min(axis=1)
    tri_hi = tv.max(axis=1)
    centroids = tv.mean(axis=1)

    node_lo, node_hi = [], []
    node_left, node_right = [], []
    leaf_start, leaf_count = [], []
    tri_order: list[int] = []

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 10000))

    def rec(idx: np.ndarray) -> int:
        ni = len(node_lo)
        node_lo.append(tri_lo[idx].min(axis=0))
        node_hi.append(tri_hi[idx].max(axis=0))
        node_left.append(-1)
        node_right.append(-1)
        leaf_start.append(-1)
        leaf_count.append(0)
        if len(idx) <= _LEAF_SIZE:
            leaf_start[ni] = len(tri_order)
            leaf_count[ni] = len(idx)
            tri_order.extend(sorted(idx.tolist()))
            return ni
        axis = int(np.argmax(node_hi[ni] - node_lo[ni]))
        half = len(idx) // 2
        part = idx[np.argpartition(centroids[idx, axis], half)]
        node_left[ni] = rec(part[:half])
        node_right[ni] = rec(part[half:])
        return ni

    try:
        rec(np.arange(len(triangles)))
    finally:
        sys.setrecursionlimit(old_limit)

    return FlatBVH(
        node_lo=np.ascontiguousarray(node_lo, dtype=np.float64),
        node_hi=np.ascontiguousarray(node_hi, dtype=np.float64),
        node_left=np.asarray(node_left, dtype=np.int64),
        node_right=np.asarray(node_right, dtype=np.int64),
        leaf_start=np.asarray(leaf_start, dtype=np.int64),
        leaf_count=np.asarray(leaf_count, dtype=np.int64),
        tri_order=np.asarray(tri_order, dtype=np.int64),
    )


@njit(cache=True, fastmath=False)
def _ray_triangle(ox, oy, oz, dx, dy, dz,
                  ax, ay, az, bx, by, bz, cx, cy, cz):
    """Moller-Trumbore; returns (t, u, v) with t = -1 on miss."""
    e1x = bx - ax
    e1y = by - ay
    e1z = bz - az
    e2x = cx - ax
    e2y = cy - ay
    e2z = cz - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if -_DET_EPS < det < _DET_EPS:
        return -1.0, 0.0, 0.0
    inv = 1.0 / det
    tx = ox - ax
    ty = oy - ay
    tz = oz - az
    u = (tx * px + ty * py + tz * pz) * inv
    if u < -_BARY_EPS or u > 1.0 + _BARY_EPS:
        return -1.0, 0.0, 0.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -_BARY_EPS or u + v > 1.0 + _BARY_EPS:
        return -1.0, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    return t, u, v


@njit(cache=True, fastmath=False)
def raycast_kernel(node_lo, node_hi, node_left, node_right,
                   leaf_start, leaf_count, tri_order,
                   vertices, triangles, origin, direction, t_min, t_max):
    """Nearest hit along the ray; ties on t broken by lower triangle index.

    Returns (tri_index, t, u, v); tri_index = -1 for a miss.
    """
    stack = np.empty(128, dtype=np.int64)
    stack[0] = 0
    sp = 1
    best_t = t_max
    best_i = np.int64(-1)
    best_u = 0.0
    best_v = 0.0
    inv_x = 1.0 / direction[0] if direction[0] != 0.0 else np.inf
    inv_y = 1.0 / direction[1] if direction[1] != 0.0 else np.inf
    inv_z = 1.0 / direction[2] if direction[2] != 0.0 else np.inf
    while sp > 0:
        sp -= 1
        ni = stack[sp]
        t1 = (node_lo[ni, 0] - origin[0]) * inv_x
        t2 = (node_hi[ni, 0] - origin[0]) * inv_x
        if t1 > t2:
            t1, t2 = t2, t1
        t3 = (node_lo[ni, 1] - origin[1]) * inv_y
        t4 = (node_hi[ni, 1] - origin[1]) * inv_y
        if t3 > t4:
            t3, t4 = t4, t3
        t5 = (node_lo[ni, 2] - origin[2]) * inv_z
        t6 = (node_hi[ni, 2] - origin[2]) * inv_z
        if t5 > t6:
            t5, t6 = t6, t5
        t_enter = max(t1, max(t3, t5))
        t_exit = min(t2, min(t4, t6))
        if t_exit < max(t_enter, 0.0) or t_enter > best_t:
            continue
        if leaf_count[ni] > 0:
            for k in range(leaf_start[ni], leaf_start[ni] + leaf_count[ni]):
                ti = tri_order[k]
                ia = triangles[ti, 0]
                ib = triangles[ti, 1]
                ic = triangles[ti, 2]
                t, u, v = _ray_triangle(
                    origin[0], origin[1], origin[2],
                    direction[0], direction[1], direction[2],
                    vertices[ia, 0], vertices[ia, 1], vertices[ia, 2],
                    vertices[ib, 0], vertices[ib, 1], vertices[ib, 2],
                    vertices[ic, 0], vertices[ic, 1], vertices[ic, 2])
                if t > t_min and (t < best_t or (t == best_t and ti < best_i)):
                    best_t = t
                    best_i = ti
                    best_u = u
                    best_v = v
        else:
            stack[sp] = node_left[ni]
            sp += 1
            stack[sp] = node_right[ni]
            sp += 1
    return best_i, best_t, best_u, best_v


@njit(cache=True, fastmath=False)
def _closest_on_triangle(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Closest point on a triangle (Ericson); returns (dist2, w1, w2, w3)."""
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
        dx = px - ax
        dy = py - ay
        dz = pz - az
        return dx * dx + dy * dy + dz * dz, 1.0, 0.0, 0.0
    bpx = px - bx
    bpy = py - by
    bpz = pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        dx = px - bx
        dy = py - by
        dz = pz - bz
        return dx * dx + dy * dy + dz * dz, 0.0, 1.0, 0.0
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        qx = ax + v * abx
        qy = ay + v * aby
        qz = az + v * abz
        dx = px - qx
        dy = py - qy
        dz = pz - qz
        return dx * dx + dy * dy + dz * dz, 1.0 - v, v, 0.0
    cpx = px - cx
    cpy = py - cy
    cpz = pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        dx = px - cx
        dy = py - cy
        dz = pz - cz
        return dx * dx + dy * dy + dz * dz, 0.0, 0.0, 1.0
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        qx = ax + w * acx
        qy = ay + w * acy
        qz = az + w * acz
        dx = px - qx
        dy = py - qy
        dz = pz - qz
        return dx * dx + dy * dy + dz * dz, 1.0 - w, 0.0, w
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        qx = bx + w * (cx - bx)
        qy = by + w * (cy - by)
        qz = bz + w * (cz - bz)
        dx = px - qx
        dy = py - qy
        dz = pz - qz
        return dx * dx + dy * dy + dz * dz, 0.0, 1.0 - w, w
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    qx = ax + abx * v + acx * w
    qy = ay + aby * v + acy * w
    qz = az + abz * v + acz * w
    dx = px - qx
    dy = py - qy
    dz = pz - qz
    return dx * dx + dy * dy + dz * dz, 1.0 - v - w, v, w


@njit(cache=True, fastmath=False)
def closest_point_kernel(vertices, triangles, p):
    """Scan all triangles for the closest surface point.

    Returns (tri_index, dist2, w1, w2, w3); ties broken by lower index
    (triangles are scanned in ascending order with strict improvement).
    """
    best_d = np.inf
    best_i = np.int64(-1)
    bw1 = 0.0
    bw2 = 0.0
    bw3 = 0.0
    for ti in range(triangles.shape[0]):
        ia = triangles[ti, 0]
        ib = triangles[ti, 1]
        ic = triangles[ti, 2]
        d2, w1, w2, w3 = _closest_on_triangle(
            p[0], p[1], p[2],
            vertices[ia, 0], vertices[ia, 1], vertices[ia, 2],
            vertices[ib, 0], vertices[ib, 1], vertices[ib, 2],
            vertices[ic, 0], vertices[ic, 1], vertices[ic, 2])
        if d2 < best_d:
            best_d = d2
            best_i = ti
            bw1 = w1
            bw2 = w2
            bw3 = w3
    return best_i, best_d, bw1, bw2, bw3
