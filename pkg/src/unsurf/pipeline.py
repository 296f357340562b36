"""Per-subject processing: predicted SDFs -> surfaces -> uncertainty -> errors."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InsufficientSamplesError, UnsurfError
from .geometry.marching import extract_level_set
from .geometry.mesh import smooth_mesh
from .geometry.pial import GeometryParams, SurfacePair, place_pial, project_to_level_set
from .geometry.sampling import trilinear_sample
from .geometry.sdf import mesh_to_sdf
from .geometry.volume import Volume
from .phantom import (
    DegradationSpec,
    Phantom,
    sector_labels,
    simulate_prediction,
    thickness,
    thickness_error,
    transfer_to_points,
)
from .uncertainty import (
    EnsembleSDF,
    UncertaintyReport,
    aggregate,
    ensemble_mean,
    ensemble_variance,
    unsurf_map,
)


def fit_white(d_hat: Volume, params: GeometryParams):
    """Level set of the predicted white SDF, regularised then pulled back.

    Smoothing and projection alternate so the result stays close to the
    zero level while losing the small-scale roughness of the prediction.
    """
    mesh = extract_level_set(d_hat, 0.0)
    for _ in range(params.smooth_iterations):
        mesh = smooth_mesh(mesh, 1, params.smooth_weight)
        mesh = project_to_level_set(mesh, d_hat, params.project_iterations)
    return mesh


@dataclass
class SubjectResult:
    subject_id: str
    d_hat: dict
    d_tilde: dict
    maps: dict
    pair: SurfacePair
    labels: object
    thickness: np.ndarray
    truth: np.ndarray
    error: object
    reports: dict
    l2: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def _stage(name, fn, *args, path="<memory>", **kw):
    try:
        return fn(*args, **kw)
    except UnsurfError as exc:
        exc.stage = getattr(exc, "stage", None) or name
        exc.args = (f"[{name}] {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise


def surface_node_values(vol_white: Volume, vol_pial: Volume, pair: SurfacePair):
    """Average a white-surface map at white nodes with a pial map at the
    corresponding pial nodes; the result lives on the white vertices."""
    a = trilinear_sample(vol_white, pair.white.vertices)
    b = trilinear_sample(vol_pial, pair.pial.vertices)
    return np.maximum(0.5 * (a + b), 0.0)


def process_subject(subject_id, phantom: Phantom, ens_white: EnsembleSDF, ens_pial: EnsembleSDF,
                    params: GeometryParams, measures=("unsurf", "variance"),
                    d_hat_override: Optional[dict] = None) -> SubjectResult:
    if d_hat_override:
        d_hat = dict(d_hat_override)
    else:
        d_hat = {
            "white": _stage("ensemble_mean", ensemble_mean, ens_white),
            "pial": _stage("ensemble_mean", ensemble_mean, ens_pial),
        }
    white = _stage("extract_level_set", fit_white, d_hat["white"], params)
    pair = _stage("place_pial", place_pial, white, d_hat["pial"], params)

    d_tilde, maps, reports = {}, {}, {}
    labels = sector_labels(pair.white.vertices, phantom.spec.center)
    if "unsurf" in measures:
        d_tilde["white"] = _stage("mesh_to_sdf", mesh_to_sdf, pair.white, d_hat["white"].grid, params.tau)
        d_tilde["pial"] = _stage("mesh_to_sdf", mesh_to_sdf, pair.pial, d_hat["pial"].grid, params.tau)
        maps["unsurf_white"] = unsurf_map(d_hat["white"], d_tilde["white"])
        maps["unsurf_pial"] = unsurf_map(d_hat["pial"], d_tilde["pial"])
        node = surface_node_values(maps["unsurf_white"], maps["unsurf_pial"], pair)
        reports["unsurf"] = aggregate("unsurf", node, labels)
    if "variance" in measures:
        if ens_white is None or ens_white.size < 2:
            raise InsufficientSamplesError("[ensemble_variance] variance needs an ensemble with M >= 2")
        maps["variance_white"] = _stage("ensemble_variance", ensemble_variance, ens_white)
        maps["variance_pial"] = _stage("ensemble_variance", ensemble_variance, ens_pial)
        node = surface_node_values(maps["variance_white"], maps["variance_pial"], pair)
        reports["variance"] = aggregate("variance", node, labels)

    est = thickness(pair)
    truth = transfer_to_points(phantom.white, phantom.thickness, pair.white.vertices)
    err = thickness_error(est, truth, labels)
    l2 = {}
    l2["white"] = float(np.mean((d_hat["white"].data - phantom.white_sdf.data) ** 2))
    l2["pial"] = float(np.mean((d_hat["pial"].data - phantom.pial_sdf.data) ** 2))
    return SubjectResult(subject_id, d_hat, d_tilde, maps, pair, labels, est, truth, err, reports, l2)


def simulate_subject(subject_id, phantom: Phantom, deg: DegradationSpec, params: GeometryParams,
                     measures=("unsurf", "variance"), n_models=None, n_passes=None):
    """Degrade both phantom SDFs (independent streams) and process them."""
    from dataclasses import replace

    ens_w = simulate_prediction(phantom.white_sdf, replace(deg, seed=_mix(deg.seed, 0)), params.tau, n_models, n_passes)
    ens_p = simulate_prediction(phantom.pial_sdf, replace(deg, seed=_mix(deg.seed, 1)), params.tau, n_models, n_passes)
    res = process_subject(subject_id, phantom, ens_w, ens_p, params, measures)
    res.meta.update(deg.to_dict())
    return res, ens_w, ens_p


def _mix(seed, stream):
    """Derive a child seed from (seed, stream) deterministically."""
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1, np.uint32)[0])
