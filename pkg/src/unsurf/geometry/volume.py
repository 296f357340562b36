from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GridError, InputError


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned voxel grid: ``world = origin + index * spacing``."""

    dims: tuple
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
            raise GridError("dims, spacing and origin must have 3 components")
        if min(dims) < 1:
            raise GridError(f"dims must be positive, got {dims}")
        if not all(np.isfinite(spacing)) or min(spacing) <= 0:
            raise GridError(f"spacing must be strictly positive, got {spacing}")
        if not all(np.isfinite(origin)):
            raise GridError("origin must be finite")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def centered(cls, n, spacing=1.0, center=(0.0, 0.0, 0.0)):
        """Cubic grid of ``n`` voxels per axis whose middle sits at ``center``."""
        dims = (n, n, n) if np.isscalar(n) else tuple(n)
        sp = (spacing,) * 3 if np.isscalar(spacing) else tuple(spacing)
        origin = tuple(c - 0.5 * (d - 1) * s for c, d, s in zip(center, dims, sp))
        return cls(dims, sp, origin)

    @property
    def size(self):
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def upper(self):
        """World position of the last voxel center."""
        return tuple(o + (d - 1) * s for o, d, s in zip(self.origin, self.dims, self.spacing))

    def axes(self):
        return [o + s * np.arange(d) for o, s, d in zip(self.origin, self.spacing, self.dims)]

    def points(self):
        """(nx*ny*nz, 3) voxel-center coordinates in C order of a (nx, ny, nz) array."""
        xs, ys, zs = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([xs.ravel(), ys.ravel(), zs.ravel()], axis=1)

    def world_to_index(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        return (pts - np.asarray(self.origin)) / np.asarray(self.spacing)

    def index_to_world(self, idx):
        idx = np.asarray(idx, dtype=np.float64)
        return np.asarray(self.origin) + idx * np.asarray(self.spacing)

    def matches(self, other: "GridSpec", rtol=1e-9):
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, rtol=rtol, atol=0)
            and np.allclose(self.origin, other.origin, rtol=rtol, atol=1e-9)
        )


@dataclass(frozen=True)
class Volume:
    """Scalar field on a :class:`GridSpec`; ``data`` has shape ``dims``.

    Arrays are indexed ``data[i, j, k]`` with ``i`` along x. On disk the
    payload is written x-fastest (Fortran order).
    """

    grid: GridSpec
    data: np.ndarray = field(repr=False)
    units: str = "mm"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != self.grid.dims:
            if data.size != self.grid.size:
                raise GridError(f"data length {data.size} != nx*ny*nz = {self.grid.size}")
            data = data.reshape(self.grid.dims)
        if not np.all(np.isfinite(data)):
            raise InputError("volume values must be finite")
        data = data.copy() if data.flags.writeable else data
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dims(self):
        return self.grid.dims

    @property
    def spacing(self):
        return self.grid.spacing

    @property
    def origin(self):
        return self.grid.origin

    def with_data(self, data, units=None):
        return Volume(self.grid, data, self.units if units is None else units)

    def clamp(self, tau):
        return self.with_data(np.clip(self.data, -tau, tau))


def require_same_grid(*vols):
    first = vols[0].grid
    for v in vols[1:]:
        if not first.matches(v.grid):
            raise GridError(f"grid mismatch: {first} vs {v.grid}")
