from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ..errors import InputError, OrientationError

MIN_AREA = 1e-12


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle surface in world millimetres.

    ``channels`` holds optional per-vertex scalars (thickness, uncertainty...).
    Triangles are expected counter-clockwise when seen from outside.
    ``flags`` carries producer warnings such as ``"clipped"``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    channels: dict = field(default_factory=dict)
    flags: tuple = ()

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise InputError("vertex coordinates must be finite")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise InputError("triangle index out of range")
        chans = {}
        for name, vals in dict(self.channels).items():
            vals = np.asarray(vals, dtype=np.float64).reshape(-1)
            if len(vals) != len(v):
                raise InputError(f"channel '{name}' has {len(vals)} values for {len(v)} vertices")
            vals = vals.copy()
            vals.setflags(write=False)
            chans[name] = vals
        v = v.copy()
        t = t.copy()
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "channels", chans)
        object.__setattr__(self, "flags", tuple(self.flags))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def with_vertices(self, vertices):
        return TriangleMesh(vertices, self.triangles, self.channels, self.flags)

    def with_channels(self, **chans):
        merged = dict(self.channels)
        merged.update(chans)
        return TriangleMesh(self.vertices, self.triangles, merged, self.flags)

    def corners(self):
        """(m, 3, 3) triangle corner coordinates."""
        return self.vertices[self.triangles]

    def face_normals(self, normalize=True):
        c = self.corners()
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        if normalize:
            n = n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
        return n

    def areas(self):
        return 0.5 * np.linalg.norm(self.face_normals(normalize=False), axis=1)

    def edges(self):
        """Distinct undirected edges as sorted index pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def signed_volume(self):
        c = self.corners()
        return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)

    def vertex_normals(self):
        return angle_weighted_vertex_normals(self.vertices, self.triangles)

    def adjacency(self):
        """Binary symmetric vertex adjacency as CSR."""
        e = self.edges()
        n = self.n_vertices
        i = np.concatenate([e[:, 0], e[:, 1]])
        j = np.concatenate([e[:, 1], e[:, 0]])
        adj = sparse.csr_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
        adj.sort_indices()
        return adj

    def validate(self, require_closed=False):
        if self.n_triangles == 0 or self.n_vertices == 0:
            raise InputError("empty mesh")
        small = np.flatnonzero(self.areas() <= MIN_AREA)
        if len(small):
            raise InputError(f"{len(small)} triangles with zero area (first: {small[0]})")
        if require_closed:
            check_closed_oriented(self.triangles)
        return self


def directed_edges(triangles):
    t = np.asarray(triangles, dtype=np.int64)
    return np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])


def check_closed_oriented(triangles):
    """Raise OrientationError unless every edge is used by exactly two
    triangles that traverse it in opposite directions."""
    d = directed_edges(triangles)
    und = np.sort(d, axis=1)
    _, und_counts = np.unique(und, axis=0, return_counts=True)
    if np.any(und_counts != 2):
        bad = int(np.sum(und_counts != 2))
        raise OrientationError(f"mesh is not closed: {bad} edges not shared by exactly 2 triangles")
    _, dir_counts = np.unique(d, axis=0, return_counts=True)
    if np.any(dir_counts != 1):
        raise OrientationError("mesh is not consistently oriented")


def is_closed_oriented(triangles):
    try:
        check_closed_oriented(triangles)
    except OrientationError:
        return False
    return True


def corner_angles(vertices, triangles):
    c = vertices[triangles]
    out = np.empty(triangles.shape, dtype=np.float64)
    for k in range(3):
        a = c[:, (k + 1) % 3] - c[:, k]
        b = c[:, (k + 2) % 3] - c[:, k]
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        out[:, k] = np.arctan2(cross, np.einsum("ij,ij->i", a, b))
    return out


def angle_weighted_vertex_normals(vertices, triangles):
    """Unit vertex normals: incident face normals weighted by corner angle."""
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64)
    c = vertices[triangles]
    fn = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    fn /= np.maximum(np.linalg.norm(fn, axis=1, keepdims=True), 1e-300)
    ang = corner_angles(vertices, triangles)
    vn = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(vn, triangles[:, k], fn * ang[:, k, None])
    return vn / np.maximum(np.linalg.norm(vn, axis=1, keepdims=True), 1e-300)


def euler_characteristic(mesh: TriangleMesh) -> int:
    """V - E + F with E the number of distinct undirected edges."""
    n_edges = len(mesh.edges()) if mesh.n_triangles else 0
    return int(mesh.n_vertices - n_edges + mesh.n_triangles)


def smooth_mesh(mesh: TriangleMesh, iterations: int, weight: float) -> TriangleMesh:
    """Uniform Laplacian smoothing: ``v += weight * (mean(neighbours) - v)``."""
    if iterations < 0:
        raise InputError("iterations must be >= 0")
    if not 0.0 < weight <= 1.0:
        raise InputError("weight must be in (0, 1]")
    if iterations == 0:
        return mesh
    adj = mesh.adjacency()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    deg[deg == 0] = 1.0
    v = np.array(mesh.vertices)
    for _ in range(iterations):
        v = v + weight * (adj @ v / deg[:, None] - v)
    return mesh.with_vertices(v)


def icosahedron(radius=1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    p = (1.0 + 5 ** 0.5) / 2.0
    v = np.array(
        [[-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
         [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
         [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1]],
        dtype=np.float64,
    )
    t = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]],
        dtype=np.int64,
    )
    v = v / np.linalg.norm(v, axis=1, keepdims=True) * radius + np.asarray(center)
    return TriangleMesh(v, t)


def icosphere(subdivisions=3, radius=1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Loop-style midpoint subdivision of the icosahedron, projected to the sphere."""
    base = icosahedron(1.0)
    v = [tuple(x) for x in base.vertices]
    tris = base.triangles.tolist()
    for _ in range(subdivisions):
        cache = {}
        new = []

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = (np.asarray(v[a]) + np.asarray(v[b])) / 2.0
                v.append(tuple(m / np.linalg.norm(m)))
                cache[key] = len(v) - 1
            return cache[key]

        for a, b, c in tris:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        tris = new
    verts = np.asarray(v) * radius + np.asarray(center)
    return TriangleMesh(verts, np.asarray(tris))


def torus_grid(n_major=16, n_minor=8, major=3.0, minor=1.0) -> TriangleMesh:
    """Closed triangulated torus (Euler characteristic 0)."""
    u = 2 * np.pi * np.arange(n_major) / n_major
    w = 2 * np.pi * np.arange(n_minor) / n_minor
    uu, ww = np.meshgrid(u, w, indexing="ij")
    x = (major + minor * np.cos(ww)) * np.cos(uu)
    y = (major + minor * np.cos(ww)) * np.sin(uu)
    z = minor * np.sin(ww)
    verts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    idx = lambda i, j: (i % n_major) * n_minor + (j % n_minor)
    tris = []
    for i in range(n_major):
        for j in range(n_minor):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            tris += [[a, b, c], [a, c, d]]
    return TriangleMesh(verts, np.asarray(tris))


def merge_meshes(*meshes) -> TriangleMesh:
    verts, tris, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + off)
        off += m.n_vertices
    return TriangleMesh(np.concatenate(verts), np.concatenate(tris))
