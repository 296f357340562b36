"""Marching cubes with a generated 256-case table.

Corners are numbered by bit: corner ``c`` sits at offset
``(c & 1, (c >> 1) & 1, (c >> 2) & 1)``. A corner is *inside* when its value
is strictly below the iso level. The table is built from face rules rather
than typed in: every cube face contributes segments between its crossing
edges, and on an ambiguous face (alternating signs) the outside corners are
kept connected, so each inside corner is cut off on its own. Neighbouring
cubes see the same face values and therefore the same segments, which makes
the output crack-free. Segment directions are chosen so that fan-triangulated
loops face the outside (increasing values).
"""
from __future__ import annotations

import warnings
from functools import lru_cache

import numpy as np

from ..errors import EmptySurfaceError, InputError
from .mesh import TriangleMesh
from .volume import Volume

# interpolation parameter is kept this far from edge ends so that a corner
# lying exactly on the iso level cannot produce coincident vertices
EDGE_EPS = 1e-3


class ClippedSurfaceWarning(UserWarning):
    pass


def _corner_pos(c):
    return np.array([c & 1, (c >> 1) & 1, (c >> 2) & 1], dtype=np.float64)


def _edges():
    out = []
    for axis in range(3):
        bit = 1 << axis
        for c in range(8):
            if not c & bit:
                out.append((c, c | bit, axis))
    return out


EDGES = _edges()
_EDGE_INDEX = {frozenset(e[:2]): i for i, e in enumerate(EDGES)}


def _faces():
    out = []
    for axis in range(3):
        u, w = [a for a in range(3) if a != axis]
        for side in (0, 1):
            base = side << axis
            ring = [base, base | (1 << u), base | (1 << u) | (1 << w), base | (1 << w)]
            normal = np.zeros(3)
            normal[axis] = 1.0 if side else -1.0
            out.append((ring, normal))
    return out


FACES = _faces()


def _edge_mid(e):
    a, b, _ = EDGES[e]
    return 0.5 * (_corner_pos(a) + _corner_pos(b))


def _directed(e0, e1, inside_pts, normal):
    m = 0.5 * (_edge_mid(e0) + _edge_mid(e1))
    g = m - np.mean(inside_pts, axis=0)
    d = _edge_mid(e1) - _edge_mid(e0)
    return (e0, e1) if np.dot(np.cross(g, d), normal) < 0 else (e1, e0)


def _case_loops(config):
    inside = [(config >> c) & 1 for c in range(8)]
    nxt = {}
    for ring, normal in FACES:
        flags = [inside[c] for c in ring]
        crossing = [_EDGE_INDEX[frozenset((ring[i], ring[(i + 1) % 4]))]
                    for i in range(4) if flags[i] != flags[(i + 1) % 4]]
        if not crossing:
            continue
        segs = []
        if len(crossing) == 2:
            pts = [_corner_pos(c) for c, f in zip(ring, flags) if f]
            segs.append(_directed(crossing[0], crossing[1], pts, normal))
        else:
            for i in range(4):
                if flags[i]:
                    e0 = _EDGE_INDEX[frozenset((ring[i - 1], ring[i]))]
                    e1 = _EDGE_INDEX[frozenset((ring[i], ring[(i + 1) % 4]))]
                    segs.append(_directed(e0, e1, [_corner_pos(ring[i])], normal))
        for a, b in segs:
            if a in nxt:
                raise AssertionError(f"case {config}: edge {a} has two successors")
            nxt[a] = b
    loops = []
    remaining = dict(nxt)
    while remaining:
        start = min(remaining)
        loop = [start]
        cur = remaining.pop(start)
        while cur != start:
            loop.append(cur)
            cur = remaining.pop(cur)
        loops.append(loop)
    return loops


def _edge_faces(e):
    a, b, _ = EDGES[e]
    return {i for i, (ring, _) in enumerate(FACES) if a in ring and b in ring}


def _triangulations(poly):
    if len(poly) == 3:
        yield [tuple(poly)]
        return
    a, b = poly[0], poly[-1]
    for k in range(1, len(poly) - 1):
        left, right = poly[: k + 1], poly[k:]
        lts = [[]] if len(left) < 3 else list(_triangulations(left))
        rts = [[]] if len(right) < 3 else list(_triangulations(right))
        for lt in lts:
            for rt in rts:
                yield lt + rt + [(a, poly[k], b)]


def _triangulate(loop):
    """Triangulate a loop without diagonals lying on a cube face.

    A diagonal between two edge points of one face could be emitted by the
    neighbouring cube as well, giving an edge with four triangles. Fans are
    tried first (every rotation), then any triangulation.
    """
    n = len(loop)
    boundary = {frozenset((loop[i], loop[(i + 1) % n])) for i in range(n)}

    def valid(tris):
        for t in tris:
            for i in range(3):
                a, b = t[i], t[(i + 1) % 3]
                if frozenset((a, b)) not in boundary and _edge_faces(a) & _edge_faces(b):
                    return False
        return True

    for r in range(n):
        rot = loop[r:] + loop[:r]
        fan = [(rot[0], rot[i], rot[i + 1]) for i in range(1, n - 1)]
        if valid(fan):
            return fan
    for tris in _triangulations(loop):
        if valid(tris):
            return tris
    raise AssertionError(f"no face-safe triangulation for loop {loop}")


@lru_cache(maxsize=1)
def case_table():
    """(256, max_tris, 3) local-edge triangle table padded with -1, and counts."""
    tris = []
    for config in range(256):
        t = []
        for loop in _case_loops(config):
            t.extend(_triangulate(loop))
        tris.append(t)
    width = max(len(t) for t in tris)
    table = np.full((256, width, 3), -1, dtype=np.int64)
    counts = np.zeros(256, dtype=np.int64)
    for c, t in enumerate(tris):
        counts[c] = len(t)
        if t:
            table[c, : len(t)] = t
    return table, counts


def extract_level_set(vol: Volume, iso: float = 0.0) -> TriangleMesh:
    """Iso-surface of ``vol`` at ``iso`` as a world-space triangle mesh.

    Triangle normals point toward increasing values, i.e. outward for a
    signed distance that is negative inside. If the inside region touches
    the grid border the surface is open there; the mesh then carries the
    ``"clipped"`` flag and a :class:`ClippedSurfaceWarning` is issued.
    """
    f = np.asarray(vol.data, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        raise InputError("volume contains non-finite values")
    if min(f.shape) < 2:
        raise EmptySurfaceError("grid too small to contain a surface")
    inside = f < iso
    table, counts = case_table()

    nx, ny, nz = f.shape
    config = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for c in range(8):
        ox, oy, oz = c & 1, (c >> 1) & 1, (c >> 2) & 1
        config |= inside[ox:nx - 1 + ox, oy:ny - 1 + oy, oz:nz - 1 + oz].astype(np.int64) << c
    cells = np.flatnonzero(counts[config.ravel()])
    if len(cells) == 0:
        raise EmptySurfaceError(f"volume never crosses iso level {iso}")

    ci, cj, ck = np.unravel_index(cells, config.shape)
    cfg = config.ravel()[cells]
    ntri = counts[cfg]
    cell_rep = np.repeat(np.arange(len(cells)), ntri)
    slot = np.arange(ntri.sum()) - np.repeat(np.cumsum(ntri) - ntri, ntri)
    local = table[cfg[cell_rep], slot]  # (T, 3) local edge ids

    edge_c0 = np.array([e[0] for e in EDGES])
    edge_axis = np.array([e[2] for e in EDGES])
    off = np.array([[c & 1, (c >> 1) & 1, (c >> 2) & 1] for c in range(8)])
    base = off[edge_c0[local]]  # (T, 3, 3)
    bi = ci[cell_rep][:, None] + base[..., 0]
    bj = cj[cell_rep][:, None] + base[..., 1]
    bk = ck[cell_rep][:, None] + base[..., 2]
    axis = edge_axis[local]
    nvox = nx * ny * nz
    gid = axis * nvox + (bi * ny + bj) * nz + bk

    uniq, inv = np.unique(gid.ravel(), return_inverse=True)
    tris = inv.reshape(-1, 3)
    e_axis = uniq // nvox
    lin = uniq % nvox
    i0, j0, k0 = np.unravel_index(lin, f.shape)
    step = np.eye(3, dtype=np.int64)[e_axis]
    i1, j1, k1 = i0 + step[:, 0], j0 + step[:, 1], k0 + step[:, 2]
    v0 = f[i0, j0, k0]
    v1 = f[i1, j1, k1]
    t = np.clip((iso - v0) / (v1 - v0), EDGE_EPS, 1.0 - EDGE_EPS)
    idx = np.stack([i0, j0, k0], axis=1).astype(np.float64)
    idx[np.arange(len(t)), e_axis] += t
    verts = vol.grid.index_to_world(idx)

    flags = ()
    border = np.zeros_like(inside)
    border[[0, -1], :, :] = True
    border[:, [0, -1], :] = True
    border[:, :, [0, -1]] = True
    if np.any(inside & border) and np.any(~inside & border):
        warnings.warn("iso-surface is clipped by the grid boundary", ClippedSurfaceWarning, stacklevel=2)
        flags = ("clipped",)
    return TriangleMesh(verts, tris, flags=flags)
