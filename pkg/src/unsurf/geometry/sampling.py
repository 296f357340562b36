from __future__ import annotations

import numpy as np

from .. import _accel
from .._accel import njit_parallel, prange
from ..errors import OutOfBoundsError
from .volume import Volume

# index-space slack for points that sit on the outermost voxel centers
_EDGE_TOL = 1e-9


@njit_parallel
def _trilinear_nb(data, idx, out):
    nx, ny, nz = data.shape
    for n in prange(idx.shape[0]):
        x, y, z = idx[n, 0], idx[n, 1], idx[n, 2]
        i = min(max(int(np.floor(x)), 0), max(nx - 2, 0))
        j = min(max(int(np.floor(y)), 0), max(ny - 2, 0))
        k = min(max(int(np.floor(z)), 0), max(nz - 2, 0))
        i1 = min(i + 1, nx - 1)
        j1 = min(j + 1, ny - 1)
        k1 = min(k + 1, nz - 1)
        fx = x - i if i1 > i else 0.0
        fy = y - j if j1 > j else 0.0
        fz = z - k if k1 > k else 0.0
        c00 = data[i, j, k] * (1.0 - fx) + data[i1, j, k] * fx
        c10 = data[i, j1, k] * (1.0 - fx) + data[i1, j1, k] * fx
        c01 = data[i, j, k1] * (1.0 - fx) + data[i1, j, k1] * fx
        c11 = data[i, j1, k1] * (1.0 - fx) + data[i1, j1, k1] * fx
        c0 = c00 * (1.0 - fy) + c10 * fy
        c1 = c01 * (1.0 - fy) + c11 * fy
        out[n] = c0 * (1.0 - fz) + c1 * fz


def _trilinear_np(data, idx):
    dims = np.asarray(data.shape)
    base = np.clip(np.floor(idx).astype(np.int64), 0, np.maximum(dims - 2, 0))
    hi = np.minimum(base + 1, dims - 1)
    frac = np.where(hi > base, idx - base, 0.0)
    i, j, k = base.T
    i1, j1, k1 = hi.T
    fx, fy, fz = frac.T
    c00 = data[i, j, k] * (1.0 - fx) + data[i1, j, k] * fx
    c10 = data[i, j1, k] * (1.0 - fx) + data[i1, j1, k] * fx
    c01 = data[i, j, k1] * (1.0 - fx) + data[i1, j, k1] * fx
    c11 = data[i, j1, k1] * (1.0 - fx) + data[i1, j1, k1] * fx
    c0 = c00 * (1.0 - fy) + c10 * fy
    c1 = c01 * (1.0 - fy) + c11 * fy
    return c0 * (1.0 - fz) + c1 * fz


def in_domain(vol: Volume, points):
    """Mask of points between the outermost voxel centers (inclusive)."""
    idx = vol.grid.world_to_index(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    hi = np.asarray(vol.dims) - 1
    return np.all((idx >= -_EDGE_TOL) & (idx <= hi + _EDGE_TOL), axis=1)


def trilinear_sample(vol: Volume, points, outside="raise", backend=None):
    """Trilinear interpolation of ``vol`` at world-space ``points``.

    ``outside="raise"`` raises :class:`OutOfBoundsError` listing the offending
    point indices; ``outside="nan"`` returns NaN for them instead.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    ok = in_domain(vol, pts)
    if not ok.all():
        bad = np.flatnonzero(~ok)
        if outside == "raise":
            raise OutOfBoundsError(
                f"{len(bad)} of {len(pts)} points fall outside the sampling domain "
                f"(first index {bad[0]})",
                indices=bad,
            )
        if outside != "nan":
            raise ValueError(f"unknown outside policy {outside!r}")
    idx = vol.grid.world_to_index(pts)
    data = np.ascontiguousarray(vol.data)
    backend = backend or ("numba" if _accel.use_numba() else "numpy")
    if backend == "numba":
        out = np.empty(len(pts))
        if len(pts):
            _trilinear_nb(data, np.ascontiguousarray(idx), out)
    else:
        out = _trilinear_np(data, idx)
    if not ok.all():
        out[~ok] = np.nan
    return out


def gradient(vol: Volume):
    """Central-difference gradient in world units, shape dims + (3,)."""
    return np.stack(np.gradient(vol.data, *vol.spacing, edge_order=1), axis=-1)
