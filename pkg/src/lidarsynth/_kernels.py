"""Numba kernels for first-hit ray queries against a flat AABB tree."""

import numpy as np
from numba import njit

# Intersection constants shared with the pure-numpy reference path (geom.py).
SELF_HIT_EPS = 1e-6
TIE_EPS = 1e-9
DET_EPS = 1e-12

_STACK_DEPTH = 64

# Forward half of the 26-voxel neighborhood (lexicographically positive), so
# every voxel pair is visited exactly once.
_NEIGHBOR_OFFSETS = np.array(
    [
        [0, 0, 1],
        [0, 1, -1],
        [0, 1, 0],
        [0, 1, 1],
        [1, -1, -1],
        [1, -1, 0],
        [1, -1, 1],
        [1, 0, -1],
        [1, 0, 0],
        [1, 0, 1],
        [1, 1, -1],
        [1, 1, 0],
        [1, 1, 1],
    ],
    dtype=np.int64,
)


@njit(cache=True)
def _find_root(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit(cache=True)
def _union(parent, i, j):
    ri = _find_root(parent, i)
    rj = _find_root(parent, j)
    if ri < rj:
        parent[rj] = ri
    elif rj < ri:
        parent[ri] = rj


@njit(cache=True)
def _link_buckets(points, order, a0, a1, b0, b1, r2, parent, same):
    for a in range(a0, a1):
        ia = order[a]
        c0 = a + 1 if same else b0
        for c in range(c0, b1):
            ic = order[c]
            dx = points[ia, 0] - points[ic, 0]
            dy = points[ia, 1] - points[ic, 1]
            dz = points[ia, 2] - points[ic, 2]
            if dx * dx + dy * dy + dz * dz <= r2:
                _union(parent, ia, ic)


@njit(cache=True)
def cluster_union(points, vox, order, uniq_keys, bucket_start, radius, parent):
    """Single-linkage union-find over a voxel hash of cell size ``radius``.

    ``order`` sorts points by voxel key; ``uniq_keys``/``bucket_start`` are
    the CSR buckets of that sorting. Links use min-root union so labels are
    input-order deterministic.
    """
    r2 = radius * radius
    base = np.int64(1) << np.int64(20)
    n_buckets = len(uniq_keys)
    for b in range(n_buckets):
        i0 = bucket_start[b]
        i1 = bucket_start[b + 1]
        p0 = order[i0]
        vx = vox[p0, 0]
        vy = vox[p0, 1]
        vz = vox[p0, 2]
        _link_buckets(points, order, i0, i1, i0, i1, r2, parent, True)
        for o in range(13):
            nkey = (
                ((vx + _NEIGHBOR_OFFSETS[o, 0] + base) << np.int64(42))
                | ((vy + _NEIGHBOR_OFFSETS[o, 1] + base) << np.int64(21))
                | (vz + _NEIGHBOR_OFFSETS[o, 2] + base)
            )
            j = np.searchsorted(uniq_keys, nkey)
            if j < n_buckets and uniq_keys[j] == nkey:
                _link_buckets(
                    points, order, i0, i1, bucket_start[j],
                    bucket_start[j + 1], r2, parent, False,
                )
    for i in range(len(parent)):
        parent[i] = _find_root(parent, i)


@njit(cache=True)
def _slab_entry(ox, oy, oz, dx, dy, dz, bmin, bmax, t_limit):
    """Entry distance of a ray into an AABB, or -1.0 when there is no overlap
    with [0, t_limit]."""
    tmin = 0.0
    tmax = t_limit
    for a in range(3):
        if a == 0:
            o = ox
            d = dx
        elif a == 1:
            o = oy
            d = dy
        else:
            o = oz
            d = dz
        if d > 1e-300 or d < -1e-300:
            inv = 1.0 / d
            t0 = (bmin[a] - o) * inv
            t1 = (bmax[a] - o) * inv
            if t0 > t1:
                t0, t1 = t1, t0
            if t0 > tmin:
                tmin = t0
            if t1 < tmax:
                tmax = t1
            if tmin > tmax:
                return -1.0
        else:
            if o < bmin[a] or o > bmax[a]:
                return -1.0
    return tmin


@njit(cache=True)
def bvh_first_hit(
    origins,
    dirs,
    max_ranges,
    node_bmin,
    node_bmax,
    node_left,
    node_right,
    node_start,
    node_count,
    tri_v0,
    tri_e1,
    tri_e2,
    tri_obj,
    tri_orig,
    t_out,
    obj_out,
    tri_out,
):
    """First hit per ray. Misses leave t_out at +inf and indices at -1.

    Equal-distance candidates (within TIE_EPS) resolve to the lowest
    (object_index, original triangle index) pair so outputs are
    reproducible for coincident geometry.
    """
    n_rays = origins.shape[0]
    stack = np.empty(_STACK_DEPTH, dtype=np.int32)
    for k in range(n_rays):
        ox = origins[k, 0]
        oy = origins[k, 1]
        oz = origins[k, 2]
        dx = dirs[k, 0]
        dy = dirs[k, 1]
        dz = dirs[k, 2]
        limit = max_ranges[k]

        best_t = np.inf
        best_obj = np.int32(-1)
        best_tri = np.int32(-1)

        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            prune = limit
            if best_t + TIE_EPS < prune:
                prune = best_t + TIE_EPS
            entry = _slab_entry(
                ox, oy, oz, dx, dy, dz, node_bmin[node], node_bmax[node], prune
            )
            if entry < 0.0:
                continue
            cnt = node_count[node]
            if cnt > 0:
                s = node_start[node]
                for it in range(s, s + cnt):
                    # Moller-Trumbore, edges inclusive, both faces.
                    px = dy * tri_e2[it, 2] - dz * tri_e2[it, 1]
                    py = dz * tri_e2[it, 0] - dx * tri_e2[it, 2]
                    pz = dx * tri_e2[it, 1] - dy * tri_e2[it, 0]
                    det = (
                        tri_e1[it, 0] * px + tri_e1[it, 1] * py + tri_e1[it, 2] * pz
                    )
                    if det > -DET_EPS and det < DET_EPS:
                        continue
                    inv = 1.0 / det
                    tx = ox - tri_v0[it, 0]
                    ty = oy - tri_v0[it, 1]
                    tz = oz - tri_v0[it, 2]
                    u = (tx * px + ty * py + tz * pz) * inv
                    if u < 0.0 or u > 1.0:
                        continue
                    qx = ty * tri_e1[it, 2] - tz * tri_e1[it, 1]
                    qy = tz * tri_e1[it, 0] - tx * tri_e1[it, 2]
                    qz = tx * tri_e1[it, 1] - ty * tri_e1[it, 0]
                    v = (dx * qx + dy * qy + dz * qz) * inv
                    if v < 0.0 or u + v > 1.0:
                        continue
                    t = (
                        tri_e2[it, 0] * qx + tri_e2[it, 1] * qy + tri_e2[it, 2] * qz
                    ) * inv
                    if t <= SELF_HIT_EPS or t > limit:
                        continue
                    if t < best_t - TIE_EPS:
                        best_t = t
                        best_obj = tri_obj[it]
                        best_tri = tri_orig[it]
                    elif t <= best_t + TIE_EPS:
                        o = tri_obj[it]
                        g = tri_orig[it]
                        if o < best_obj or (o == best_obj and g < best_tri):
                            best_t = t
                            best_obj = o
                            best_tri = g
            else:
                l = node_left[node]
                r = node_right[node]
                el = _slab_entry(
                    ox, oy, oz, dx, dy, dz, node_bmin[l], node_bmax[l], prune
                )
                er = _slab_entry(
                    ox, oy, oz, dx, dy, dz, node_bmin[r], node_bmax[r], prune
                )
                # Push the farther child first so the nearer is visited next.
                if el >= 0.0 and er >= 0.0:
                    if el <= er:
                        stack[top] = r
                        top += 1
                        stack[top] = l
                        top += 1
                    else:
                        stack[top] = l
                        top += 1
                        stack[top] = r
                        top += 1
                elif el >= 0.0:
                    stack[top] = l
                    top += 1
                elif er >= 0.0:
                    stack[top] = r
                    top += 1

        t_out[k] = best_t
        obj_out[k] = best_obj
        tri_out[k] = best_tri
