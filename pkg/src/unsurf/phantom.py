"""Synthetic white/pial phantoms and a slice-spacing degradation simulator.

The simulator stands in for the SDF-predicting network: it takes an exact
SDF and returns an ensemble of "predictions" with anisotropic blur along the
slice axis, per-sample correlated noise and a bias field shared by all
samples.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import InputError, SpecError
from .geometry.closest import ClosestPointIndex
from .geometry.marching import extract_level_set
from .geometry.mesh import TriangleMesh, icosphere
from .geometry.pial import SurfacePair
from .geometry.sdf import mesh_to_sdf
from .geometry.volume import GridSpec, Volume
from .uncertainty import EnsembleSDF, ParcelLabels

KINDS = ("concentric-spheres", "ellipsoids", "gyral-sphere")
SLICE_AXES = {"sagittal": 0, "coronal": 1, "axial": 2}
SLICE_SPACINGS = (2.0, 3.0, 4.0, 5.0, 6.0)
FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))

# density of the parametric meshes that define non-spherical phantoms
_FINE_SUBDIVISIONS = 5


@dataclass(frozen=True)
class PhantomSpec:
    kind: str = "concentric-spheres"
    white_radius: float = 8.0
    pial_radius: float = 10.5
    white_axes: tuple = (8.0, 8.0, 6.0)
    pial_axes: tuple = (10.0, 10.0, 8.0)
    gyral_amplitude: float = 0.0
    gyral_frequency: float = 3.0
    grid_size: int = 40
    grid_spacing: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    tau: float = 5.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "white_axes", tuple(float(a) for a in self.white_axes))
        object.__setattr__(self, "pial_axes", tuple(float(a) for a in self.pial_axes))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.kind not in KINDS:
            raise SpecError(f"unknown phantom kind {self.kind!r}; expected one of {KINDS}")
        if not self.tau > 0 or not self.grid_spacing > 0 or self.grid_size < 4:
            raise SpecError("tau, grid_spacing must be > 0 and grid_size >= 4")
        if self.kind == "ellipsoids":
            encloses = all(p > w for p, w in zip(self.pial_axes, self.white_axes))
        else:
            # shared radial profile: the gap is the radius difference everywhere
            encloses = self.pial_radius > self.white_radius
        if not encloses or min(self._extent()[0]) <= 0:
            raise SpecError("pial surface must strictly enclose the white surface")
        outer = self._extent()[1]
        half = 0.5 * (self.grid_size - 1) * self.grid_spacing
        if outer[1] + self.tau > half:
            raise SpecError(
                f"grid half-width {half:.2f} mm does not cover the pial surface "
                f"({outer[1]:.2f} mm) plus the tau={self.tau} margin"
            )

    def _extent(self):
        """(min, max) radial extent of white and pial."""
        if self.kind == "ellipsoids":
            return (min(self.white_axes), max(self.white_axes)), (min(self.pial_axes), max(self.pial_axes))
        a = abs(self.gyral_amplitude) if self.kind == "gyral-sphere" else 0.0
        return ((self.white_radius - a, self.white_radius + a),
                (self.pial_radius - a, self.pial_radius + a))

    @property
    def grid(self):
        return GridSpec.centered(self.grid_size, self.grid_spacing, self.center)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DegradationSpec:
    slice_axis: str = "axial"
    slice_spacing: float = 1.0
    noise_amplitude: float = 0.0
    noise_correlation: float = 3.0
    bias_amplitude: float = 0.0
    ensemble_size: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.slice_axis not in SLICE_AXES:
            raise SpecError(f"slice_axis must be one of {sorted(SLICE_AXES)}")
        if self.noise_amplitude < 0 or self.bias_amplitude < 0 or self.noise_correlation < 0:
            raise SpecError("amplitudes and correlation length must be >= 0")
        if self.ensemble_size < 1:
            raise SpecError("ensemble_size must be >= 1")
        if not self.slice_spacing > 0:
            raise SpecError("slice_spacing must be > 0")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Phantom:
    spec: PhantomSpec
    white_sdf: Volume
    pial_sdf: Volume
    white: TriangleMesh
    pial: TriangleMesh
    labels: ParcelLabels
    thickness: np.ndarray = field(repr=False)


# ------------------------------------------------------------------ shapes
def _gyral_profile(u, k):
    return np.cos(k * u[:, 0]) * np.cos(k * u[:, 1]) * np.cos(k * u[:, 2])


def _parametric_mesh(spec, which):
    """Dense star-shaped tessellation of the white or pial surface."""
    base = icosphere(_FINE_SUBDIVISIONS, 1.0)
    u = base.vertices
    if spec.kind == "ellipsoids":
        axes = np.asarray(spec.white_axes if which == "white" else spec.pial_axes)
        pts = u * axes
    else:
        r0 = spec.white_radius if which == "white" else spec.pial_radius
        r = r0 + spec.gyral_amplitude * _gyral_profile(u, spec.gyral_frequency)
        pts = u * r[:, None]
    return TriangleMesh(pts + np.asarray(spec.center), base.triangles)


def _is_spherical(spec):
    return spec.kind == "concentric-spheres" or (
        spec.kind == "gyral-sphere" and spec.gyral_amplitude == 0.0
    )


def analytic_sdfs(spec: PhantomSpec):
    """(white SDF, pial SDF, white dense mesh or None, pial dense mesh or None)."""
    grid = spec.grid
    if _is_spherical(spec):
        r = np.linalg.norm(grid.points() - np.asarray(spec.center), axis=1).reshape(grid.dims)
        w = Volume(grid, np.clip(r - spec.white_radius, -spec.tau, spec.tau))
        p = Volume(grid, np.clip(r - spec.pial_radius, -spec.tau, spec.tau))
        return w, p, None, None
    wm = _parametric_mesh(spec, "white")
    pm = _parametric_mesh(spec, "pial")
    return mesh_to_sdf(wm, grid, spec.tau), mesh_to_sdf(pm, grid, spec.tau), wm, pm


def sector_labels(vertices, center=None) -> ParcelLabels:
    """16 parcels: eight 45-degree azimuth sectors times north/south bands."""
    v = np.asarray(vertices, dtype=np.float64)
    c = v.mean(axis=0) if center is None else np.asarray(center, dtype=np.float64)
    d = v - c
    az = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * np.pi)
    sector = np.minimum((az / (np.pi / 4)).astype(np.int64), 7)
    south = (d[:, 2] < 0).astype(np.int64)
    names = {
        s + 8 * b: f"{'south' if b else 'north'}_az{45 * s:03d}" for b in (0, 1) for s in range(8)
    }
    return ParcelLabels(sector + 8 * south, names)


def make_phantom(spec: PhantomSpec) -> Phantom:
    w_sdf, p_sdf, _, pial_dense = analytic_sdfs(spec)
    white = extract_level_set(w_sdf, 0.0)
    pial = extract_level_set(p_sdf, 0.0)
    if "clipped" in white.flags or "clipped" in pial.flags:
        raise SpecError("phantom surface touches the grid boundary")
    labels = sector_labels(white.vertices, spec.center)
    if _is_spherical(spec):
        truth = np.full(white.n_vertices, spec.pial_radius - spec.white_radius)
    else:
        d, _, _, _ = ClosestPointIndex(pial_dense).query(white.vertices)
        truth = d
    return Phantom(spec, w_sdf, p_sdf, white, pial, labels, truth)


# -------------------------------------------------------------- degradation
def _rng(seed, *stream):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


def blur_sigma_mm(spacing, grid_spacing):
    """Extra Gaussian sigma so the total slice profile has FWHM = spacing.

    The native voxel already accounts for a FWHM of one grid step, so a
    slice spacing equal to the grid spacing adds no blur.
    """
    extra = max(spacing * spacing - grid_spacing * grid_spacing, 0.0)
    return np.sqrt(extra) * FWHM_TO_SIGMA


def reslice(data, axis, step):
    """Keep only slices every ``step`` voxels along ``axis`` and linearly
    interpolate the grid back from them (the thick-slice sampling of a
    clinical acquisition). Slice 0 and the last index are always kept."""
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[axis]
    if step <= 1.0 + 1e-12 or n < 2:
        return data.copy()
    pos = np.arange(0.0, n - 1 + 1e-9, step)
    if pos[-1] < n - 1:
        pos = np.append(pos, n - 1.0)
    x = np.moveaxis(data, axis, -1)
    i0 = np.clip(np.floor(pos).astype(np.int64), 0, n - 2)
    t = pos - i0
    slices = x[..., i0] * (1.0 - t) + x[..., i0 + 1] * t
    idx = np.arange(n)
    j = np.clip(np.searchsorted(pos, idx, side="right") - 1, 0, len(pos) - 2)
    w = (idx - pos[j]) / (pos[j + 1] - pos[j])
    out = slices[..., j] * (1.0 - w) + slices[..., j + 1] * w
    return np.ascontiguousarray(np.moveaxis(out, -1, axis))


def _noise_std(shape, sigma_vox):
    sig = np.broadcast_to(np.asarray(sigma_vox, dtype=np.float64), (len(shape),))
    impulse = np.zeros(tuple(min(s, int(8 * g) + 1) | 1 for s, g in zip(shape, sig)))
    impulse[tuple(s // 2 for s in impulse.shape)] = 1.0
    k = ndimage.gaussian_filter(impulse, sigma_vox, mode="constant")
    return float(np.sqrt(np.sum(k * k)))


def correlated_noise(rng, shape, sigma_vox):
    """Unit-variance Gaussian-filtered white noise."""
    white = rng.standard_normal(shape)
    if np.all(np.asarray(sigma_vox) <= 0):
        return white
    return ndimage.gaussian_filter(white, sigma_vox, mode="wrap") / _noise_std(shape, sigma_vox)


def bias_field(rng, grid: GridSpec):
    """Random polynomial of degree <= 2 in normalised coordinates, max |b| = 1."""
    axes = [np.linspace(-1.0, 1.0, d) for d in grid.dims]
    x, y, z = np.meshgrid(*axes, indexing="ij")
    terms = [x, y, z, x * y, x * z, y * z, x * x - 1 / 3, y * y - 1 / 3, z * z - 1 / 3]
    coef = rng.standard_normal(len(terms))
    b = sum(c * t for c, t in zip(coef, terms))
    return b / np.max(np.abs(b))


def simulate_prediction(true_sdf: Volume, deg: DegradationSpec, tau: float = 5.0,
                        n_models: Optional[int] = None, n_passes: Optional[int] = None) -> EnsembleSDF:
    """Ensemble of degraded copies of ``true_sdf``; a pure function of ``deg.seed``."""
    grid = true_sdf.grid
    axis = SLICE_AXES[deg.slice_axis]
    if deg.slice_spacing < grid.spacing[axis] - 1e-12:
        raise SpecError("slice spacing must be >= the grid spacing along the slice axis")
    base = np.array(true_sdf.data)
    sigma = blur_sigma_mm(deg.slice_spacing, grid.spacing[axis]) / grid.spacing[axis]
    if sigma > 0:
        base = ndimage.gaussian_filter1d(base, sigma, axis=axis, mode="nearest")
    base = reslice(base, axis, deg.slice_spacing / grid.spacing[axis])
    if deg.bias_amplitude > 0:
        base = base + deg.bias_amplitude * bias_field(_rng(deg.seed, 1), grid)
    sig_vox = np.asarray(deg.noise_correlation) / np.asarray(grid.spacing)
    samples = np.empty((deg.ensemble_size,) + grid.dims)
    for m in range(deg.ensemble_size):
        s = base
        if deg.noise_amplitude > 0:
            s = base + deg.noise_amplitude * correlated_noise(_rng(deg.seed, 2, m), grid.dims, sig_vox)
        samples[m] = np.clip(s, -tau, tau)
    return EnsembleSDF(grid, samples, n_models, n_passes)


# ---------------------------------------------------------------- thickness
def thickness(pair: SurfacePair) -> np.ndarray:
    """Per white-vertex thickness in mm.

    With vertex correspondence this is the white-to-pial displacement length.
    Otherwise it is the symmetric closest-point distance
    ``(d(v, pial) + d(p*, white)) / 2`` with ``p*`` the closest pial point.
    """
    try:
        pair.white.validate()
        pair.pial.validate()
    except InputError as exc:
        raise InputError(f"degenerate mesh: {exc}") from exc
    if pair.correspondence:
        return np.linalg.norm(pair.pial.vertices - pair.white.vertices, axis=1)
    d1, p_star, _, _ = ClosestPointIndex(pair.pial).query(pair.white.vertices)
    d2, _, _, _ = ClosestPointIndex(pair.white).query(p_star)
    return 0.5 * (d1 + d2)


def transfer_to_points(mesh: TriangleMesh, values, points):
    """Barycentric interpolation of per-vertex ``values`` at the closest
    points of ``mesh`` to ``points``."""
    values = np.asarray(values, dtype=np.float64)
    _, q, tri, _ = ClosestPointIndex(mesh).query(points)
    c = mesh.corners()[tri]
    v0, v1 = c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]
    v2 = q - c[:, 0]
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    den = d00 * d11 - d01 * d01
    b1 = (d11 * d20 - d01 * d21) / den
    b2 = (d00 * d21 - d01 * d20) / den
    b0 = 1.0 - b1 - b2
    t = mesh.triangles[tri]
    return b0 * values[t[:, 0]] + b1 * values[t[:, 1]] + b2 * values[t[:, 2]]


@dataclass(frozen=True)
class ThicknessError:
    node: np.ndarray
    parcel: dict
    subject: float


def thickness_error(estimated, truth, labels: ParcelLabels) -> ThicknessError:
    from .uncertainty import parcel_mean

    est = np.asarray(estimated, dtype=np.float64)
    tru = np.asarray(truth, dtype=np.float64)
    if est.shape != tru.shape or len(est) != len(labels):
        raise InputError(
            f"length mismatch: estimated {est.shape}, truth {tru.shape}, labels {len(labels)}"
        )
    node = np.abs(est - tru)
    return ThicknessError(node, parcel_mean(node, labels), float(np.mean(node)))
