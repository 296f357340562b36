"""Independent reference implementations used only by the tests.

They are deliberately written differently from the library code: point to
triangle distance by plane projection plus segment clamping, inside/outside
by ray-parity counting, and ray casting against analytic star-shaped
surfaces.
"""
import numpy as np


def point_segment_distance(p, a, b):
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t * ab))


def point_triangle_distance(p, a, b, c):
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n)
    h = np.dot(p - a, n)
    proj = p - h * n
    # barycentric coordinates of the projection via areas
    def area2(u, v, w):
        return np.dot(np.cross(v - u, w - u), n)
    tot = area2(a, b, c)
    l1 = area2(proj, b, c) / tot
    l2 = area2(a, proj, c) / tot
    l3 = area2(a, b, proj) / tot
    if l1 >= 0 and l2 >= 0 and l3 >= 0:
        return abs(h)
    return min(point_segment_distance(p, a, b), point_segment_distance(p, b, c),
               point_segment_distance(p, c, a))


def unsigned_distance(vertices, triangles, p):
    return min(point_triangle_distance(p, *vertices[t]) for t in triangles)


def ray_hits(vertices, triangles, origin, direction):
    """Distances along the ray to every triangle it crosses (Moller-Trumbore)."""
    c = vertices[triangles]
    e1 = c[:, 1] - c[:, 0]
    e2 = c[:, 2] - c[:, 0]
    pvec = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = origin - c[:, 0]
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = (qvec @ direction) * inv
    t = np.einsum("ij,ij->i", e2, qvec) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
    return t[hit]


_DIRS = np.array([[0.5773, 0.5774, 0.5775], [0.2672, -0.5345, 0.8018], [-0.7071, 0.1, 0.7]])


def inside_by_parity(vertices, triangles, p):
    """Majority vote of ray-crossing parity over three skew directions."""
    votes = 0
    for d in _DIRS:
        d = d / np.linalg.norm(d)
        votes += len(ray_hits(vertices, triangles, np.asarray(p, float), d)) % 2
    return votes >= 2


def brute_signed_distance(vertices, triangles, p):
    d = unsigned_distance(vertices, triangles, p)
    return -d if inside_by_parity(vertices, triangles, p) else d


def fibonacci_directions(n):
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5 ** 0.5) * i
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)


def star_ray_cast(radius_fn, origin, directions, t_max, n_steps=400):
    """First crossing of rays with the star-shaped surface ``|x| = radius_fn(x/|x|)``.

    Marches each ray with a fixed step and refines sign changes by bisection.
    Returns (distance, hit point) per ray; rays that never cross get inf.
    """
    origin = np.asarray(origin, float)

    def f(x):
        r = np.linalg.norm(x, axis=-1)
        return r - radius_fn(x / r[..., None])

    ts = np.linspace(0.0, t_max, n_steps + 1)
    pts = origin[None, None, :] + ts[None, :, None] * directions[:, None, :]
    vals = f(pts)
    s0 = np.sign(vals[:, :1])
    change = np.sign(vals[:, 1:]) != s0
    first = np.where(change.any(axis=1), change.argmax(axis=1), -1)
    dist = np.full(len(directions), np.inf)
    hits = np.full((len(directions), 3), np.nan)
    rays = np.flatnonzero(first >= 0)
    lo, hi = ts[first[rays]], ts[first[rays] + 1]
    flo = vals[rays, first[rays]]
    d = directions[rays]
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        fm = f(origin + mid[:, None] * d)
        same = np.sign(fm) == np.sign(flo)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
    dist[rays] = 0.5 * (lo + hi)
    hits[rays] = origin + dist[rays, None] * d
    return dist, hits


def point_ellipsoid_distance(p, axes):
    """Exact distance from ``p`` to the axis-aligned ellipsoid with semi-axes ``axes``.

    Closest point x_i = a_i^2 p_i / (a_i^2 + t) with t the root of
    sum (a_i p_i / (a_i^2 + t))^2 = 1 on t > -min(a_i^2); found by bisection.
    """
    p = np.asarray(p, float)
    a2 = np.asarray(axes, float) ** 2

    def g(t):
        return np.sum(a2 * p * p / (a2 + t) ** 2) - 1.0

    lo = -a2.min() + 1e-12
    hi = max(np.linalg.norm(p) * np.sqrt(a2.max()), 1.0)
    while g(hi) > 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    x = a2 * p / (a2 + t)
    return float(np.linalg.norm(x - p))


def _segment_distances(p, a, b):
    ab = b - a
    t = np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def brute_signed_distance_many(vertices, triangles, points):
    """:func:`brute_signed_distance` for many points: a scan over every
    triangle, vectorised across the query points."""
    p = np.asarray(points, float)
    best = np.full(len(p), np.inf)
    for tri in triangles:
        a, b, c = vertices[tri]
        n = np.cross(b - a, c - a)
        n = n / np.linalg.norm(n)
        h = (p - a) @ n
        proj = p - h[:, None] * n
        tot = np.cross(b - a, c - a) @ n
        l1 = np.cross(b - proj, c - proj) @ n / tot
        l2 = np.cross(c - proj, a - proj) @ n / tot
        l3 = 1.0 - l1 - l2
        inside = (l1 >= 0) & (l2 >= 0) & (l3 >= 0)
        edge = np.minimum.reduce([_segment_distances(p, a, b), _segment_distances(p, b, c),
                                  _segment_distances(p, c, a)])
        best = np.minimum(best, np.where(inside, np.abs(h), edge))
    votes = np.zeros(len(p), dtype=int)
    c = vertices[triangles]
    for d in _DIRS:
        d = d / np.linalg.norm(d)
        crossings = np.zeros(len(p), dtype=int)
        for a, b, cc in c:
            e1, e2 = b - a, cc - a
            pvec = np.cross(d, e2)
            det = e1 @ pvec
            if abs(det) <= 1e-14:
                continue
            tvec = p - a
            u = tvec @ pvec / det
            qvec = np.cross(tvec, e1)
            v = qvec @ d / det
            t = qvec @ e2 / det
            crossings += (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
        votes += crossings % 2
    return np.where(votes >= 2, -best, best)
