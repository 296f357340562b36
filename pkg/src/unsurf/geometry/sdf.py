from __future__ import annotations

import numpy as np
from scipy import ndimage

from .. import _accel
from ..errors import InputError, OrientationError
from .closest import ClosestPointIndex, query_band_np, query_brute_np
from .mesh import TriangleMesh
from .volume import GridSpec, Volume


def _checked_index(mesh: TriangleMesh) -> ClosestPointIndex:
    if mesh.n_triangles == 0:
        raise InputError("empty mesh")
    mesh.validate(require_closed=True)
    if mesh.signed_volume() <= 0:
        raise OrientationError("mesh encloses negative volume: triangles face inward")
    return ClosestPointIndex(mesh)


def signed_distance(mesh: TriangleMesh, points, backend=None, index=None):
    """Exact signed distance (negative inside) at arbitrary points."""
    index = index or _checked_index(mesh)
    return index.signed_distance(points, backend)


def mesh_to_sdf(mesh: TriangleMesh, grid: GridSpec, tau=5.0, backend=None) -> Volume:
    """Sample the signed distance to ``mesh`` at every voxel center of ``grid``.

    Values are clamped to ``[-tau, tau]`` (pass ``tau=None`` for no clamp).
    The sign comes from the angle-weighted pseudonormal of the closest
    face, edge or vertex.
    """
    if isinstance(grid, Volume):
        grid = grid.grid
    if tau is not None and not tau > 0:
        raise InputError("truncation tau must be > 0")
    index = _checked_index(mesh)
    backend = backend or ("numba" if _accel.use_numba() else "numpy")
    pts = grid.points()

    if backend == "numba" or tau is None:
        d = index.signed_distance(pts, backend)
    elif backend == "numpy":
        d = _banded_numpy(index, grid, pts, tau)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if tau is not None:
        d = np.clip(d, -tau, tau)
    return Volume(grid, d.reshape(grid.dims))


def _banded_numpy(index, grid, pts, tau):
    # exact distances inside the band; beyond it only the sign matters, and
    # a band at least one voxel wide keeps each far connected component on
    # one side of the surface
    radius = max(tau, max(grid.spacing)) * (1.0 + 1e-9)
    d2, q, tri, feat = query_band_np(index.corners, pts, radius)
    near = np.isfinite(d2)
    out = np.empty(len(pts))
    out[near] = np.sqrt(d2[near]) * index.sign_of(pts[near], q[near], tri[near], feat[near])

    far = ~near
    if far.any():
        labels, n = ndimage.label(far.reshape(grid.dims))
        flat = labels.ravel()
        reps = np.zeros(n, dtype=np.int64)
        # first voxel (lowest flat index) of every component
        nz = np.flatnonzero(flat)
        _, first = np.unique(flat[nz], return_index=True)
        reps = nz[first]
        rd2, rq, rtri, rfeat = query_brute_np(index.corners, pts[reps])
        signs = index.sign_of(pts[reps], rq, rtri, rfeat)
        out[far] = (signs[flat[far] - 1]) * tau
    return out
