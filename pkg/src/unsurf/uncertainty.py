"""Voxel-wise uncertainty maps and their node / parcel / subject summaries.

Two measures are provided: the unbiased ensemble variance over ``M = N * Z``
stochastic predictions, and the squared discrepancy between the predicted
SDF and the SDF recomputed from the fitted surface. Both are mm^2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import GridError, InputError, InsufficientSamplesError
from .geometry.mesh import TriangleMesh
from .geometry.sampling import trilinear_sample
from .geometry.volume import GridSpec, Volume, require_same_grid

MEASURES = ("unsurf", "variance")


@dataclass(frozen=True)
class EnsembleSDF:
    """M aligned SDF samples. ``n_models * n_passes == M`` when both are set."""

    grid: GridSpec
    samples: np.ndarray = field(repr=False)
    n_models: Optional[int] = None
    n_passes: Optional[int] = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 4 or s.shape[1:] != self.grid.dims:
            raise GridError(f"samples must have shape (M,) + {self.grid.dims}, got {s.shape}")
        if s.shape[0] < 1:
            raise InputError("ensemble needs at least one sample")
        if (self.n_models is None) != (self.n_passes is None):
            raise InputError("set both n_models and n_passes or neither")
        if self.n_models is not None and self.n_models * self.n_passes != s.shape[0]:
            raise InputError(
                f"M={s.shape[0]} does not equal N*Z = {self.n_models}*{self.n_passes}"
            )
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @classmethod
    def from_volumes(cls, volumes, n_models=None, n_passes=None):
        volumes = list(volumes)
        if not volumes:
            raise InputError("ensemble needs at least one sample")
        require_same_grid(*volumes)
        return cls(volumes[0].grid, np.stack([v.data for v in volumes]), n_models, n_passes)

    @property
    def size(self):
        return self.samples.shape[0]

    def volume(self, m):
        return Volume(self.grid, self.samples[m])


def ensemble_mean(e: EnsembleSDF) -> Volume:
    acc = np.array(e.samples[0])
    for m in range(1, e.size):
        acc += e.samples[m]
    return Volume(e.grid, acc / e.size)


def ensemble_variance(e: EnsembleSDF) -> Volume:
    """Unbiased voxel-wise variance (``M - 1`` denominator), in mm^2."""
    if e.size < 2:
        raise InsufficientSamplesError(f"variance needs M >= 2 samples, got {e.size}")
    mean = ensemble_mean(e).data
    acc = np.zeros(e.grid.dims)
    for m in range(e.size):
        d = e.samples[m] - mean
        acc += d * d
    return Volume(e.grid, acc / (e.size - 1), units="mm^2")


def unsurf_map(d_hat: Volume, d_tilde: Volume) -> Volume:
    """Squared discrepancy between predicted and surface-recomputed SDFs."""
    require_same_grid(d_hat, d_tilde)
    diff = d_hat.data - d_tilde.data
    return Volume(d_hat.grid, diff * diff, units="mm^2")


def sdf_l2_loss(pred: Volume, truth: Volume) -> float:
    require_same_grid(pred, truth)
    diff = pred.data - truth.data
    return float(np.mean(diff * diff))


@dataclass(frozen=True)
class ParcelLabels:
    labels: np.ndarray
    names: dict

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if lab.size and lab.min() < 0:
            raise InputError("parcel labels must be non-negative")
        names = {int(k): str(v) for k, v in dict(self.names).items()}
        unknown = set(np.unique(lab).tolist()) - set(names)
        if unknown:
            raise InputError(f"labels {sorted(unknown)} missing from the label dictionary")
        lab = lab.copy()
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "names", names)

    def __len__(self):
        return len(self.labels)

    @property
    def ids(self):
        return sorted(self.names)


def node_uncertainty(u: Volume, mesh: TriangleMesh) -> np.ndarray:
    vals = trilinear_sample(u, mesh.vertices)
    return np.maximum(vals, 0.0)


def parcel_mean(node_vals, labels: ParcelLabels) -> dict:
    """Mean of ``node_vals`` per label; labels without nodes map to ``None``."""
    node_vals = np.asarray(node_vals, dtype=np.float64)
    if len(node_vals) != len(labels):
        raise InputError(f"{len(node_vals)} node values for {len(labels)} labels")
    out = {}
    for lab in labels.ids:
        sel = node_vals[labels.labels == lab]
        out[lab] = float(np.mean(sel)) if len(sel) else None
    return out


parcel_uncertainty = parcel_mean


def subject_uncertainty(node_vals) -> float:
    node_vals = np.asarray(node_vals, dtype=np.float64)
    if node_vals.size == 0:
        raise InputError("no node values to average")
    return float(np.mean(node_vals))


@dataclass(frozen=True)
class UncertaintyReport:
    measure: str
    node: np.ndarray = field(repr=False)
    parcel: dict
    subject: float
    units: str = "mm^2"

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise InputError(f"unknown measure {self.measure!r}")
        node = np.asarray(self.node, dtype=np.float64).copy()
        if not np.all(np.isfinite(node)) or np.any(node < 0):
            raise InputError("node uncertainties must be finite and >= 0")
        node.setflags(write=False)
        object.__setattr__(self, "node", node)

    @property
    def missing_parcels(self):
        return [k for k, v in self.parcel.items() if v is None]


def aggregate(measure: str, node_vals, labels: ParcelLabels) -> UncertaintyReport:
    node_vals = np.asarray(node_vals, dtype=np.float64)
    return UncertaintyReport(
        measure=measure,
        node=node_vals,
        parcel=parcel_mean(node_vals, labels),
        subject=subject_uncertainty(node_vals),
    )
