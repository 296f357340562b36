"""Exact closest-point queries against a triangle mesh.

Two interchangeable backends produce the same distances:

* numba: a bounding-volume hierarchy (median split, <= 4 triangles per leaf)
  walked per query point, nearest child first.
* numpy: vectorised closest-point over (point, triangle) candidate pairs,
  either every pair in chunks or, for truncated grids, the pairs that fall
  within the truncation band of a spatial hash.

Feature codes returned with each hit (used for the pseudonormal sign):
0 face, 1/2/3 vertex a/b/c, 4 edge ab, 5 edge bc, 6 edge ca.
"""
from __future__ import annotations

import numpy as np

from .. import _accel
from .._accel import njit, njit_parallel, prange

LEAF_SIZE = 4
_STACK = 128
_PAIR_BUDGET = 2_000_000


# --------------------------------------------------------------------- BVH
class BVH:
    """Flat BVH over triangle corners. Built once per mesh, read-only after."""

    def __init__(self, corners):
        corners = np.ascontiguousarray(corners, dtype=np.float64)
        n = len(corners)
        cent = corners.mean(axis=1)
        tmin = corners.min(axis=1)
        tmax = corners.max(axis=1)
        order = np.arange(n, dtype=np.int64)

        bmin, bmax, left, right, start, count = [], [], [], [], [], []
        # (node id, lo, hi) work list; children appended in creation order
        bmin.append(None)
        bmax.append(None)
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        work = [(0, 0, n)]
        while work:
            node, lo, hi = work.pop()
            idx = order[lo:hi]
            bmin[node] = tmin[idx].min(axis=0)
            bmax[node] = tmax[idx].max(axis=0)
            if hi - lo <= LEAF_SIZE:
                start[node], count[node] = lo, hi - lo
                continue
            c = cent[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            idx = idx[np.argsort(c[:, axis], kind="stable")]
            order[lo:hi] = idx
            mid = lo + (hi - lo) // 2
            kids = []
            for _ in range(2):
                bmin.append(None)
                bmax.append(None)
                left.append(-1)
                right.append(-1)
                start.append(0)
                count.append(0)
                kids.append(len(left) - 1)
            left[node], right[node] = kids
            work.append((kids[1], mid, hi))
            work.append((kids[0], lo, mid))

        self.bmin = np.ascontiguousarray(bmin, dtype=np.float64)
        self.bmax = np.ascontiguousarray(bmax, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.start = np.asarray(start, dtype=np.int64)
        self.count = np.asarray(count, dtype=np.int64)
        self.order = order
        self.corners = np.ascontiguousarray(corners[order])

    @property
    def n_nodes(self):
        return len(self.left)


@njit
def _closest_on_triangle(px, py, pz, t):
    """Ericson's region test. Returns (d2, qx, qy, qz, feature)."""
    ax, ay, az = t[0, 0], t[0, 1], t[0, 2]
    bx, by, bz = t[1, 0], t[1, 1], t[1, 2]
    cx, cy, cz = t[2, 0], t[2, 1], t[2, 2]
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    feature = 0
    if d1 <= 0.0 and d2 <= 0.0:
        qx, qy, qz, feature = ax, ay, az, 1
    else:
        bpx, bpy, bpz = px - bx, py - by, pz - bz
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            qx, qy, qz, feature = bx, by, bz, 2
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                v = d1 / (d1 - d3)
                qx, qy, qz, feature = ax + v * abx, ay + v * aby, az + v * abz, 4
            else:
                cpx, cpy, cpz = px - cx, py - cy, pz - cz
                d5 = abx * cpx + aby * cpy + abz * cpz
                d6 = acx * cpx + acy * cpy + acz * cpz
                if d6 >= 0.0 and d5 <= d6:
                    qx, qy, qz, feature = cx, cy, cz, 3
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                        w = d2 / (d2 - d6)
                        qx, qy, qz, feature = ax + w * acx, ay + w * acy, az + w * acz, 6
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                            w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                            qx = bx + w * (cx - bx)
                            qy = by + w * (cy - by)
                            qz = bz + w * (cz - bz)
                            feature = 5
                        else:
                            denom = 1.0 / (va + vb + vc)
                            v = vb * denom
                            w = vc * denom
                            qx = ax + abx * v + acx * w
                            qy = ay + aby * v + acy * w
                            qz = az + abz * v + acz * w
    dx, dy, dz = px - qx, py - qy, pz - qz
    return dx * dx + dy * dy + dz * dz, qx, qy, qz, feature


@njit
def _box_d2(px, py, pz, bmin, bmax, node):
    d = 0.0
    for k in range(3):
        p = px if k == 0 else (py if k == 1 else pz)
        lo = bmin[node, k]
        hi = bmax[node, k]
        if p < lo:
            d += (lo - p) * (lo - p)
        elif p > hi:
            d += (p - hi) * (p - hi)
    return d


@njit
def _query_one(px, py, pz, bmin, bmax, left, right, start, count, corners, out_q):
    best = np.inf
    best_tri = -1
    best_feat = -1
    stack = np.empty(_STACK, dtype=np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if _box_d2(px, py, pz, bmin, bmax, node) >= best:
            continue
        if count[node] > 0:
            for j in range(start[node], start[node] + count[node]):
                d2, qx, qy, qz, feat = _closest_on_triangle(px, py, pz, corners[j])
                if d2 < best:
                    best = d2
                    best_tri = j
                    best_feat = feat
                    out_q[0] = qx
                    out_q[1] = qy
                    out_q[2] = qz
        else:
            a = left[node]
            b = right[node]
            da = _box_d2(px, py, pz, bmin, bmax, a)
            db = _box_d2(px, py, pz, bmin, bmax, b)
            # push the farther child first so the nearer one is popped next
            if da <= db:
                stack[top] = b
                stack[top + 1] = a
            else:
                stack[top] = a
                stack[top + 1] = b
            top += 2
    return best, best_tri, best_feat


@njit_parallel
def _bvh_query(points, bmin, bmax, left, right, start, count, corners, d2, q, tri, feat):
    for i in prange(points.shape[0]):
        b, t, f = _query_one(
            points[i, 0], points[i, 1], points[i, 2],
            bmin, bmax, left, right, start, count, corners, q[i],
        )
        d2[i] = b
        tri[i] = t
        feat[i] = f


def query_bvh(bvh: BVH, points):
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    d2 = np.empty(n)
    q = np.empty((n, 3))
    tri = np.empty(n, dtype=np.int64)
    feat = np.empty(n, dtype=np.int64)
    if n:
        _bvh_query(points, bvh.bmin, bvh.bmax, bvh.left, bvh.right, bvh.start,
                   bvh.count, bvh.corners, d2, q, tri, feat)
    return d2, q, bvh.order[tri], feat


# ------------------------------------------------------------------- numpy
def closest_on_triangles_np(p, t):
    """Vectorised twin of the numba region test over paired rows.

    ``p``: (k, 3) points, ``t``: (k, 3, 3) triangles. Returns (d2, q, feature).
    """
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    ab = b - a
    ac = c - a
    dot = lambda u, v: np.einsum("ij,ij->i", u, v)
    ap = p - a
    bp = p - b
    cp = p - c
    d1, d2 = dot(ab, ap), dot(ac, ap)
    d3, d4 = dot(ab, bp), dot(ac, bp)
    d5, d6 = dot(ab, cp), dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    r_a = (d1 <= 0) & (d2 <= 0)
    r_b = ~r_a & (d3 >= 0) & (d4 <= d3)
    done = r_a | r_b
    r_ab = ~done & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    done |= r_ab
    r_c = ~done & (d6 >= 0) & (d5 <= d6)
    done |= r_c
    r_ac = ~done & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    done |= r_ac
    r_bc = ~done & (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
    done |= r_bc
    r_f = ~done

    q = np.empty_like(p)
    feat = np.zeros(len(p), dtype=np.int64)
    q[r_a] = a[r_a]
    feat[r_a] = 1
    q[r_b] = b[r_b]
    feat[r_b] = 2
    q[r_c] = c[r_c]
    feat[r_c] = 3
    m = r_ab
    v = d1[m] / (d1[m] - d3[m])
    q[m] = a[m] + v[:, None] * ab[m]
    feat[m] = 4
    m = r_ac
    w = d2[m] / (d2[m] - d6[m])
    q[m] = a[m] + w[:, None] * ac[m]
    feat[m] = 6
    m = r_bc
    w = (d4[m] - d3[m]) / ((d4[m] - d3[m]) + (d5[m] - d6[m]))
    q[m] = b[m] + w[:, None] * (c[m] - b[m])
    feat[m] = 5
    m = r_f
    denom = 1.0 / (va[m] + vb[m] + vc[m])
    q[m] = a[m] + ab[m] * (vb[m] * denom)[:, None] + ac[m] * (vc[m] * denom)[:, None]
    diff = p - q
    return dot(diff, diff), q, feat


def _reduce_pairs(n_points, pid, tid, p, corners):
    """Nearest candidate per point. Points without candidates keep d2 = inf."""
    d2 = np.full(n_points, np.inf)
    q = np.zeros((n_points, 3))
    tri = np.full(n_points, -1, dtype=np.int64)
    feat = np.full(n_points, -1, dtype=np.int64)
    if len(pid) == 0:
        return d2, q, tri, feat
    pd2, pq, pf = closest_on_triangles_np(p[pid], corners[tid])
    # first minimum per point in candidate order (ascending triangle id)
    order = np.lexsort((tid, pd2, pid))
    first = np.ones(len(order), dtype=bool)
    first[1:] = pid[order][1:] != pid[order][:-1]
    sel = order[first]
    who = pid[sel]
    d2[who] = pd2[sel]
    q[who] = pq[sel]
    tri[who] = tid[sel]
    feat[who] = pf[sel]
    return d2, q, tri, feat


def query_brute_np(corners, points):
    """All-pairs nearest triangle, chunked to bound memory."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n, m = len(points), len(corners)
    chunk = max(1, _PAIR_BUDGET // max(m, 1))
    d2 = np.empty(n)
    q = np.empty((n, 3))
    tri = np.empty(n, dtype=np.int64)
    feat = np.empty(n, dtype=np.int64)
    tids = np.arange(m, dtype=np.int64)
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        k = e - s
        pid = np.repeat(np.arange(k, dtype=np.int64), m)
        tid = np.tile(tids, k)
        r = _reduce_pairs(k, pid, tid, points[s:e], corners)
        d2[s:e], q[s:e], tri[s:e], feat[s:e] = r
    return d2, q, tri, feat


def query_band_np(corners, points, radius):
    """Nearest triangle for points within ``radius`` of the mesh.

    Points farther than ``radius`` come back with ``d2 = inf``. Candidates are
    gathered from a uniform hash whose cells store every triangle whose box,
    grown by ``radius``, overlaps the cell; that set contains every triangle
    within ``radius`` of any point in the cell.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cell = radius / 2.0
    lo = np.minimum(points.min(axis=0), corners.min(axis=(0, 1))) - radius
    tmin = np.floor((corners.min(axis=1) - radius - lo) / cell).astype(np.int64)
    tmax = np.floor((corners.max(axis=1) + radius - lo) / cell).astype(np.int64)
    pcell = np.floor((points - lo) / cell).astype(np.int64)
    shape = np.maximum(tmax.max(axis=0), pcell.max(axis=0)) + 1

    ext = tmax - tmin + 1
    per_tri = ext.prod(axis=1)
    reg_tri = np.repeat(np.arange(len(corners), dtype=np.int64), per_tri)
    offs = np.arange(per_tri.sum()) - np.repeat(np.cumsum(per_tri) - per_tri, per_tri)
    e = ext[reg_tri]
    ox = offs // (e[:, 1] * e[:, 2])
    oy = (offs // e[:, 2]) % e[:, 1]
    oz = offs % e[:, 2]
    cx = tmin[reg_tri, 0] + ox
    cy = tmin[reg_tri, 1] + oy
    cz = tmin[reg_tri, 2] + oz
    key = (cx * shape[1] + cy) * shape[2] + cz
    srt = np.lexsort((reg_tri, key))
    key = key[srt]
    reg_tri = reg_tri[srt]

    pkey = (pcell[:, 0] * shape[1] + pcell[:, 1]) * shape[2] + pcell[:, 2]
    first = np.searchsorted(key, pkey, side="left")
    last = np.searchsorted(key, pkey, side="right")
    ncand = last - first

    n = len(points)
    d2 = np.full(n, np.inf)
    q = np.zeros((n, 3))
    tri = np.full(n, -1, dtype=np.int64)
    feat = np.full(n, -1, dtype=np.int64)
    cum = np.cumsum(ncand)
    s = 0
    while s < n:
        base = cum[s - 1] if s else 0
        e = int(np.searchsorted(cum, base + _PAIR_BUDGET, side="right"))
        e = max(e, s + 1)
        e = min(e, n)
        cnt = ncand[s:e]
        pid = np.repeat(np.arange(e - s, dtype=np.int64), cnt)
        within = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        tid = reg_tri[np.repeat(first[s:e], cnt) + within]
        r = _reduce_pairs(e - s, pid, tid, points[s:e], corners)
        d2[s:e], q[s:e], tri[s:e], feat[s:e] = r
        s = e
    far = d2 > radius * radius
    d2[far] = np.inf
    tri[far] = -1
    feat[far] = -1
    return d2, q, tri, feat


# ------------------------------------------------------------ pseudonormals
def feature_pseudonormals(vertices, triangles):
    """(m, 7, 3) pseudonormal per triangle feature, indexed by feature code.

    Face: unit normal. Edge: sum of the two adjacent unit face normals.
    Vertex: incident unit face normals weighted by corner angle.
    """
    from .mesh import angle_weighted_vertex_normals

    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles, dtype=np.int64)
    c = v[t]
    fn = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    fn /= np.maximum(np.linalg.norm(fn, axis=1, keepdims=True), 1e-300)
    vn = angle_weighted_vertex_normals(v, t)

    m = len(t)
    pn = np.empty((m, 7, 3))
    pn[:, 0] = fn
    pn[:, 1:4] = vn[t]
    # edges ab, bc, ca
    ed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    ed.sort(axis=1)
    _, inv = np.unique(ed, axis=0, return_inverse=True)
    inv = inv.ravel()
    esum = np.zeros((inv.max() + 1, 3))
    np.add.at(esum, inv, np.tile(fn, (3, 1)))
    pn[:, 4] = esum[inv[:m]]
    pn[:, 5] = esum[inv[m:2 * m]]
    pn[:, 6] = esum[inv[2 * m:]]
    return pn


class ClosestPointIndex:
    """Closest-point and signed-distance queries against one mesh."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.corners = np.ascontiguousarray(mesh.corners())
        self._bvh = None
        self._pn = None

    @property
    def bvh(self):
        if self._bvh is None:
            self._bvh = BVH(self.corners)
        return self._bvh

    @property
    def pseudonormals(self):
        if self._pn is None:
            self._pn = feature_pseudonormals(self.mesh.vertices, self.mesh.triangles)
        return self._pn

    def query(self, points, backend=None):
        """Return (distance, closest point, triangle index, feature code)."""
        backend = backend or ("numba" if _accel.use_numba() else "numpy")
        if backend == "numba":
            d2, q, tri, feat = query_bvh(self.bvh, points)
        elif backend == "numpy":
            d2, q, tri, feat = query_brute_np(self.corners, points)
        else:
            raise ValueError(f"unknown backend {backend!r}")
        return np.sqrt(d2), q, tri, feat

    def sign_of(self, points, q, tri, feat):
        """+1 outside, -1 inside, from the pseudonormal of the closest feature."""
        pn = self.pseudonormals[tri, feat]
        s = np.einsum("ij,ij->i", np.asarray(points) - q, pn)
        return np.where(s < 0, -1.0, 1.0)

    def signed_distance(self, points, backend=None):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        d, q, tri, feat = self.query(points, backend)
        return d * self.sign_of(points, q, tri, feat)
