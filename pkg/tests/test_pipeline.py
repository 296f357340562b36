import numpy as np
import pytest

from unsurf.errors import InsufficientSamplesError, SpecError, StageError
from unsurf.geometry import GeometryParams, GridSpec, euler_characteristic, extract_level_set, mesh_to_sdf
from unsurf.phantom import DegradationSpec, PhantomSpec, make_phantom
from unsurf.pipeline import fit_white, process_subject, simulate_subject
from unsurf.runner import run_cells
from unsurf.config import RunConfig

# brain-like curvature: the discretisation floor of the discrepancy scales with 1 / radius^2
NULL_SPEC = PhantomSpec(white_radius=18.0, pial_radius=20.5, grid_size=56)


@pytest.fixture(scope="module")
def sphere():
    return make_phantom(NULL_SPEC)


def _self_consistent(ph, params):
    return {k: mesh_to_sdf(extract_level_set(v, 0.0), v.grid, params.tau)
            for k, v in (("white", ph.white_sdf), ("pial", ph.pial_sdf))}


def test_null_case(sphere):
    params = GeometryParams()
    res = process_subject("null", sphere, None, None, params, ("unsurf",), _self_consistent(sphere, params))
    assert res.reports["unsurf"].subject <= 1e-3
    assert not res.pair.frozen.any()


def test_monotone_response(sphere):
    params = GeometryParams()
    pts = sphere.white_sdf.grid.points()
    bump = (np.sin(pts[:, 0] / 3) * np.cos(pts[:, 1] / 4) * np.sin(pts[:, 2] / 5 + 0.3)).reshape(sphere.white_sdf.dims)
    us = []
    for eps in (0.25, 0.5, 1.0):
        d_hat = {k: v.with_data(np.clip(v.data + eps * bump, -params.tau, params.tau))
                 for k, v in (("white", sphere.white_sdf), ("pial", sphere.pial_sdf))}
        res = process_subject("eps", sphere, None, None, params, ("unsurf",), d_hat)
        us.append(res.reports["unsurf"].subject)
    assert us[0] < us[1] < us[2], us


def test_fit_white_is_a_sphere(sphere):
    mesh = fit_white(sphere.white_sdf, GeometryParams())
    assert euler_characteristic(mesh) == 2
    assert np.max(np.abs(np.linalg.norm(mesh.vertices, axis=1) - 18.0)) < 0.1


def test_report_consistency():
    ph = make_phantom(PhantomSpec())
    res, ens_w, _ = simulate_subject("s", ph, DegradationSpec("axial", 3.0, 0.1, ensemble_size=3, seed=1),
                                     GeometryParams())
    for rep in res.reports.values():
        counts = np.bincount(res.labels.labels, minlength=16)
        weighted = sum(rep.parcel[p] * counts[p] for p in res.labels.ids if counts[p]) / counts.sum()
        assert weighted == pytest.approx(rep.subject, rel=1e-9)
        assert np.all(rep.node >= 0)
    assert set(res.maps) == {"unsurf_white", "unsurf_pial", "variance_white", "variance_pial"}
    assert ens_w.size == 3


def test_variance_needs_two_samples():
    ph = make_phantom(PhantomSpec())
    with pytest.raises(InsufficientSamplesError):
        simulate_subject("s", ph, DegradationSpec(ensemble_size=1), GeometryParams(), ("variance",))
    res, _, _ = simulate_subject("s", ph, DegradationSpec(ensemble_size=1), GeometryParams(), ("unsurf",))
    assert set(res.reports) == {"unsurf"}


def test_stage_error_names_stage():
    ph = make_phantom(PhantomSpec())
    small = GridSpec.centered(10, 1.0)
    bad = {"white": mesh_to_sdf(ph.white, small, 5.0).with_data(np.full((10,) * 3, 5.0)), "pial": ph.pial_sdf}
    with pytest.raises(Exception) as info:
        process_subject("s", ph, None, None, GeometryParams(), ("unsurf",), bad)
    assert getattr(info.value, "stage", None) == "extract_level_set"


def test_run_cells_wraps_errors():
    cfg = RunConfig(phantom=PhantomSpec(white_radius=4, pial_radius=6.5, grid_size=28),
                    spacings=(0.5,), axes=("axial",), n_models=1, n_passes=2)
    with pytest.raises(StageError) as info:
        run_cells(cfg)
    assert isinstance(info.value.cause, SpecError)
    assert info.value.stage == "simulate_prediction"
    assert "axial_0.5mm" in str(info.value)


def test_config_rejects_single_sample_variance():
    with pytest.raises(SpecError):
        RunConfig(n_models=1, n_passes=1, measure="variance")
    assert RunConfig(n_models=1, n_passes=1, measure="unsurf").ensemble_size == 1
