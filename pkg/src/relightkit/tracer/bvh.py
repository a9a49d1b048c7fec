"""Bounding volume hierarchy over triangles.

The tree is built in numpy (median split on the longest centroid axis) and
flattened into arrays that the numba traversal kernels read.  Triangles are
stored in leaf order as ``(v0, e1, e2)`` for Moller-Trumbore tests.
"""
from __future__ import annotations

import math

import numba
import numpy as np

from ..errors import MeshStructureError
from ..mesh import TriangleMesh

LEAF_SIZE = 4
_STACK = 64


class BVHAccel:
    """Flattened BVH.

    Node ``k`` has bounds ``bmin[k]``, ``bmax[k]``.  Leaves have
    ``count[k] > 0`` and own triangles ``order[start[k]:start[k] + count[k]]``;
    interior nodes have ``count[k] == 0`` and children ``left[k]``,
    ``right[k]``.
    """

    def __init__(self, mesh: TriangleMesh, leaf_size=LEAF_SIZE):
        if mesh.n_triangles == 0:
            raise MeshStructureError("cannot build a BVH over an empty mesh")
        self.mesh = mesh
        pos = mesh.positions
        tri = mesh.triangles
        p0, p1, p2 = pos[tri[:, 0]], pos[tri[:, 1]], pos[tri[:, 2]]
        tmin = np.minimum(np.minimum(p0, p1), p2)
        tmax = np.maximum(np.maximum(p0, p1), p2)
        centroid = (tmin + tmax) * 0.5

        n_max = 2 * mesh.n_triangles
        bmin = np.empty((n_max, 3))
        bmax = np.empty((n_max, 3))
        left = np.full(n_max, -1, dtype=np.int64)
        right = np.full(n_max, -1, dtype=np.int64)
        start = np.zeros(n_max, dtype=np.int64)
        count = np.zeros(n_max, dtype=np.int64)
        order = np.arange(mesh.n_triangles, dtype=np.int64)

        n_nodes = 1
        stack = [(0, 0, mesh.n_triangles)]
        while stack:
            node, lo, hi = stack.pop()
            ids = order[lo:hi]
            bmin[node] = tmin[ids].min(axis=0)
            bmax[node] = tmax[ids].max(axis=0)
            if hi - lo <= leaf_size:
                start[node], count[node] = lo, hi - lo
                continue
            c = centroid[ids]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            mid = (hi - lo) // 2
            part = np.argpartition(c[:, axis], mid, kind="introselect")
            order[lo:hi] = ids[part]
            left[node], right[node] = n_nodes, n_nodes + 1
            n_nodes += 2
            stack.append((right[node], lo + mid, hi))
            stack.append((left[node], lo, lo + mid))

        self.bmin = bmin[:n_nodes].copy()
        self.bmax = bmax[:n_nodes].copy()
        self.left = left[:n_nodes].copy()
        self.right = right[:n_nodes].copy()
        self.start = start[:n_nodes].copy()
        self.count = count[:n_nodes].copy()
        self.order = order
        v0 = p0[order]
        self.v0 = np.ascontiguousarray(v0)
        self.e1 = np.ascontiguousarray(p1[order] - v0)
        self.e2 = np.ascontiguousarray(p2[order] - v0)
        for a in (self.bmin, self.bmax, self.left, self.right, self.start, self.count,
                  self.order, self.v0, self.e1, self.e2):
            a.setflags(write=False)

    @property
    def n_nodes(self):
        return len(self.bmin)

    @property
    def arrays(self):
        """Tuple passed to the numba kernels."""
        return (self.bmin, self.bmax, self.left, self.right, self.start, self.count,
                self.order, self.v0, self.e1, self.e2)

    def leaves(self):
        return np.flatnonzero(self.count > 0)

    def intersect(self, origins, directions, tmin=0.0, tmax=math.inf):
        """Closest hits for a batch of rays.

        Returns ``(t, tri_id, u, v)``; misses have ``t = inf`` and ``tri_id = -1``.
        """
        o = np.ascontiguousarray(np.atleast_2d(origins), dtype=np.float64)
        d = np.ascontiguousarray(np.atleast_2d(directions), dtype=np.float64)
        o, d = np.broadcast_arrays(o, d)
        return _intersect_many(*self.arrays, np.ascontiguousarray(o), np.ascontiguousarray(d), tmin, tmax)

    def occluded(self, origins, directions, tmax=math.inf):
        o = np.ascontiguousarray(np.atleast_2d(origins), dtype=np.float64)
        d = np.ascontiguousarray(np.atleast_2d(directions), dtype=np.float64)
        o, d = np.broadcast_arrays(o, d)
        return _occluded_many(*self.arrays, np.ascontiguousarray(o), np.ascontiguousarray(d), tmax)


def build_bvh(mesh: TriangleMesh) -> BVHAccel:
    return BVHAccel(mesh)


@numba.njit(cache=True, nogil=True, inline="always")
def _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, k, tmin, tmax):
    """Moller-Trumbore; returns (hit, t, u, v) for hits with tmin < t < tmax."""
    e1x, e1y, e1z = e1[k, 0], e1[k, 1], e1[k, 2]
    e2x, e2y, e2z = e2[k, 0], e2[k, 1], e2[k, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return False, 0.0, 0.0, 0.0
    inv = 1.0 / det
    tx = ox - v0[k, 0]
    ty = oy - v0[k, 1]
    tz = oz - v0[k, 2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return False, 0.0, 0.0, 0.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return False, 0.0, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= tmin or t >= tmax:
        return False, 0.0, 0.0, 0.0
    return True, t, u, v


@numba.njit(cache=True, nogil=True, inline="always")
def _box_entry(bmin, bmax, k, ox, oy, oz, ix, iy, iz, tmax):
    t0 = (bmin[k, 0] - ox) * ix
    t1 = (bmax[k, 0] - ox) * ix
    lo, hi = min(t0, t1), max(t0, t1)
    t0 = (bmin[k, 1] - oy) * iy
    t1 = (bmax[k, 1] - oy) * iy
    lo, hi = max(lo, min(t0, t1)), min(hi, max(t0, t1))
    t0 = (bmin[k, 2] - oz) * iz
    t1 = (bmax[k, 2] - oz) * iz
    lo, hi = max(lo, min(t0, t1)), min(hi, max(t0, t1))
    hi = min(hi, tmax)
    lo = max(lo, 0.0)
    # small slack so rays grazing flat boxes are not culled by rounding
    if lo > hi * (1.0 + 1e-12) + 1e-300:
        return math.inf
    return lo


@numba.njit(cache=True, nogil=True)
def _inv(d):
    return 1.0 / d if d != 0.0 else 1e300


@numba.njit(cache=True, nogil=True)
def closest_hit(bmin, bmax, left, right, start, count, order, v0, e1, e2,
                ox, oy, oz, dx, dy, dz, tmin, tmax):
    """Nearest hit along the ray in (tmin, tmax): returns (t, tri_id, u, v)."""
    ix, iy, iz = _inv(dx), _inv(dy), _inv(dz)
    stack = np.empty(_STACK, np.int64)
    best_t = tmax
    best_k = -1
    best_u = 0.0
    best_v = 0.0
    if _box_entry(bmin, bmax, 0, ox, oy, oz, ix, iy, iz, best_t) == math.inf:
        return math.inf, -1, 0.0, 0.0
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        c = count[node]
        if c > 0:
            s = start[node]
            for k in range(s, s + c):
                hit, t, u, v = _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, k, tmin, best_t)
                if hit:
                    best_t, best_k, best_u, best_v = t, k, u, v
            continue
        a = left[node]
        b = right[node]
        ta = _box_entry(bmin, bmax, a, ox, oy, oz, ix, iy, iz, best_t)
        tb = _box_entry(bmin, bmax, b, ox, oy, oz, ix, iy, iz, best_t)
        if ta > tb:
            a, b = b, a
            ta, tb = tb, ta
        # push the farther child first so the nearer one is popped next
        if tb != math.inf:
            stack[sp] = b
            sp += 1
        if ta != math.inf:
            stack[sp] = a
            sp += 1
    if best_k < 0:
        return math.inf, -1, 0.0, 0.0
    return best_t, order[best_k], best_u, best_v


@numba.njit(cache=True, nogil=True)
def any_hit(bmin, bmax, left, right, start, count, order, v0, e1, e2,
            ox, oy, oz, dx, dy, dz, tmax):
    """True if anything is hit along the ray in (0, tmax)."""
    ix, iy, iz = _inv(dx), _inv(dy), _inv(dz)
    stack = np.empty(_STACK, np.int64)
    if _box_entry(bmin, bmax, 0, ox, oy, oz, ix, iy, iz, tmax) == math.inf:
        return False
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        c = count[node]
        if c > 0:
            s = start[node]
            for k in range(s, s + c):
                hit, t, u, v = _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, k, 0.0, tmax)
                if hit:
                    return True
            continue
        a = left[node]
        b = right[node]
        if _box_entry(bmin, bmax, b, ox, oy, oz, ix, iy, iz, tmax) != math.inf:
            stack[sp] = b
            sp += 1
        if _box_entry(bmin, bmax, a, ox, oy, oz, ix, iy, iz, tmax) != math.inf:
            stack[sp] = a
            sp += 1
    return False


@numba.njit(cache=True, nogil=True)
def _intersect_many(bmin, bmax, left, right, start, count, order, v0, e1, e2, o, d, tmin, tmax):
    n = o.shape[0]
    ts = np.empty(n)
    ids = np.empty(n, np.int64)
    us = np.empty(n)
    vs = np.empty(n)
    for i in range(n):
        t, k, u, v = closest_hit(bmin, bmax, left, right, start, count, order, v0, e1, e2,
                                 o[i, 0], o[i, 1], o[i, 2], d[i, 0], d[i, 1], d[i, 2], tmin, tmax)
        ts[i], ids[i], us[i], vs[i] = t, k, u, v
    return ts, ids, us, vs


@numba.njit(cache=True, nogil=True)
def _occluded_many(bmin, bmax, left, right, start, count, order, v0, e1, e2, o, d, tmax):
    n = o.shape[0]
    out = np.empty(n, np.bool_)
    for i in range(n):
        out[i] = any_hit(bmin, bmax, left, right, start, count, order, v0, e1, e2,
                         o[i, 0], o[i, 1], o[i, 2], d[i, 0], d[i, 1], d[i, 2], tmax)
    return out


def brute_force_intersect(mesh: TriangleMesh, origins, directions, tmin=0.0, tmax=math.inf):
    """Closest hits by testing every triangle (vectorized numpy, no tree).

    Independent reference for the BVH; same hit convention as
    :meth:`BVHAccel.intersect`.
    """
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    d = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    o, d = np.broadcast_arrays(o, d)
    pos, tri = mesh.positions, mesh.triangles
    v0 = pos[tri[:, 0]]
    e1 = pos[tri[:, 1]] - v0
    e2 = pos[tri[:, 2]] - v0
    n = len(o)
    best_t = np.full(n, math.inf)
    best_k = np.full(n, -1, dtype=np.int64)
    best_u = np.zeros(n)
    best_v = np.zeros(n)
    for i in range(n):
        p = np.cross(d[i], e2)
        det = np.einsum("ij,ij->i", e1, p)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            tv = o[i] - v0
            u = np.einsum("ij,ij->i", tv, p) * inv
            q = np.cross(tv, e1)
            v = (q @ d[i]) * inv
            t = np.einsum("ij,ij->i", e2, q) * inv
        ok = (det != 0) & (u >= 0) & (u <= 1) & (v >= 0) & (u + v <= 1) & (t > tmin) & (t < tmax)
        if ok.any():
            cand = np.flatnonzero(ok)
            k = cand[np.argmin(t[cand])]
            best_t[i], best_k[i], best_u[i], best_v[i] = t[k], k, u[k], v[k]
    return best_t, best_k, best_u, best_v
