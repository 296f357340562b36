import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from helpers import sphere_volume
from unsurf.errors import GridError, InputError, InsufficientSamplesError
from unsurf.geometry import GridSpec, Volume, icosphere
from unsurf.uncertainty import (
    EnsembleSDF, ParcelLabels, aggregate, ensemble_mean, ensemble_variance, node_uncertainty,
    parcel_uncertainty, sdf_l2_loss, subject_uncertainty, unsurf_map,
)

G = GridSpec((2, 2, 2))


def _vol(v, grid=G):
    return Volume(grid, np.full(grid.dims, float(v)))


def _ens(*values):
    return EnsembleSDF.from_volumes([_vol(v) for v in values])


def test_mean_examples():
    assert np.all(ensemble_mean(_ens(3.5, 3.5, 3.5)).data == 3.5)
    assert np.all(ensemble_mean(_ens(0, 2)).data == 1.0)


def test_hundred_sample_provenance():
    rng = np.random.default_rng(0)
    samples = rng.normal(size=(100,) + G.dims)
    e = EnsembleSDF(G, samples, n_models=5, n_passes=20)
    assert e.size == 100
    assert np.allclose(ensemble_mean(e).data, samples.mean(axis=0), atol=1e-14)
    with pytest.raises(InputError):
        EnsembleSDF(G, samples, n_models=5, n_passes=10)


def test_variance_examples():
    assert np.all(ensemble_variance(_ens(1.2, 1.2, 1.2)).data == 0.0)
    assert np.all(ensemble_variance(_ens(0, 2)).data == 2.0)
    v = ensemble_variance(_ens(1, 1, 3, 3))
    assert np.all(v.data == pytest.approx(4.0 / 3.0, abs=1e-15))
    assert v.units == "mm^2"
    with pytest.raises(InsufficientSamplesError):
        ensemble_variance(_ens(1.0))


def test_unsurf_examples():
    assert np.all(unsurf_map(_vol(0.7), _vol(0.7)).data == 0.0)
    assert np.all(unsurf_map(_vol(1.5), _vol(1.0)).data == 0.25)
    assert np.all(unsurf_map(_vol(-2.0), _vol(3.0)).data == 25.0)


def test_grid_mismatch():
    other = GridSpec((2, 2, 2), spacing=(2.0, 1.0, 1.0))
    with pytest.raises(GridError):
        unsurf_map(_vol(0), _vol(0, other))
    with pytest.raises(GridError):
        EnsembleSDF.from_volumes([_vol(0), _vol(0, other)])
    with pytest.raises(GridError):
        sdf_l2_loss(_vol(0), _vol(0, other))


def test_l2_examples():
    assert sdf_l2_loss(_vol(1.0), _vol(1.0)) == 0.0
    assert sdf_l2_loss(_vol(1.3), _vol(1.0)) == pytest.approx(0.09, abs=1e-15)
    data = np.zeros(G.dims)
    data[1, 0, 1] = 2.0
    assert sdf_l2_loss(Volume(G, data), _vol(0)) == 0.5


def test_node_examples():
    mesh = icosphere(2, 3.0)
    grid = GridSpec.centered(10)
    assert np.all(node_uncertainty(_vol(0.4, grid), mesh) == 0.4)
    assert np.all(node_uncertainty(_vol(0.0, grid), mesh) == 0.0)


def test_injected_cap_error():
    sph = sphere_volume(8.0, 24, tau=5.0)
    x = sph.grid.points()[:, 0].reshape(sph.dims)
    ramp = np.clip((x - 3.0) / 2.0, 0, 1)
    ramp = ramp * ramp * (3 - 2 * ramp)
    mesh = icosphere(3, 8.0)
    px = mesh.vertices[:, 0]
    for eps in (0.25, 0.5, 1.0):
        u = unsurf_map(sph.with_data(sph.data + eps * ramp), sph)
        node = node_uncertainty(u, mesh)
        diff = node[px > 6.0] - np.median(node[px < -6.0])
        assert np.allclose(diff, eps ** 2, atol=1e-12)


def test_parcel_examples():
    assert parcel_uncertainty([2.0] * 4, ParcelLabels([0, 0, 1, 1], {0: "a", 1: "b"})) == {0: 2.0, 1: 2.0}
    assert parcel_uncertainty([1, 3, 2], ParcelLabels([0, 0, 1], {0: "a", 1: "b"})) == {0: 2.0, 1: 2.0}
    assert parcel_uncertainty([0, 0.5, 1], ParcelLabels([4, 4, 4], {4: "x"})) == {4: 0.5}


def test_empty_parcel_is_missing():
    rep = aggregate("unsurf", [1.0, 2.0], ParcelLabels([0, 0], {0: "a", 1: "b"}))
    assert rep.parcel[1] is None
    assert rep.missing_parcels == [1]


def test_labels_must_be_known():
    with pytest.raises(InputError):
        ParcelLabels([0, 3], {0: "a"})


def test_subject_examples():
    assert subject_uncertainty([0.3] * 5) == pytest.approx(0.3)
    assert subject_uncertainty([0, 2]) == 1.0
    assert subject_uncertainty([1, 2, 3, 6]) == 3.0
    with pytest.raises(InputError):
        subject_uncertainty([])


def test_report_rejects_negative():
    with pytest.raises(InputError):
        aggregate("unsurf", [-1.0], ParcelLabels([0], {0: "a"}))


samples = arrays(np.float64, st.tuples(st.integers(2, 6), st.just(2), st.just(2), st.just(2)),
                 elements=st.floats(-5, 5))


@given(s=samples, seed=st.integers(0, 1000), c=st.floats(-5, 5), k=st.floats(0.1, 10))
def test_variance_properties(s, seed, c, k):
    base = ensemble_variance(EnsembleSDF(G, s)).data
    perm = np.random.default_rng(seed).permutation(len(s))
    scale = 1 + np.max(np.abs(s)) ** 2
    assert np.allclose(ensemble_variance(EnsembleSDF(G, s[perm])).data, base, atol=1e-12 * scale)
    assert np.allclose(ensemble_variance(EnsembleSDF(G, s + c)).data, base, atol=1e-9 * (scale + c * c))
    assert np.allclose(ensemble_variance(EnsembleSDF(G, s * k)).data, k * k * base,
                       atol=1e-10 * k * k * scale)


@given(s=samples, a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_mean_is_linear(s, a, b):
    got = ensemble_mean(EnsembleSDF(G, a * s + b)).data
    assert np.allclose(got, a * ensemble_mean(EnsembleSDF(G, s)).data + b, atol=1e-12)


# a 1/1024 mm lattice: squared differences of denormal-scale values would underflow
vals = arrays(np.float64, (2, 2, 2), elements=st.integers(-5120, 5120).map(lambda i: i / 1024))


@given(a=vals, b=vals)
def test_unsurf_symmetric_and_zero_iff_equal(a, b):
    u1 = unsurf_map(Volume(G, a), Volume(G, b)).data
    u2 = unsurf_map(Volume(G, b), Volume(G, a)).data
    assert np.array_equal(u1, u2)
    assert np.array_equal(u1 == 0, a == b)


@given(node=st.lists(st.floats(0, 10), min_size=1, max_size=60), seed=st.integers(0, 1000))
def test_aggregation_consistency(node, seed):
    node = np.asarray(node)
    lab = np.random.default_rng(seed).integers(0, 5, len(node))
    labels = ParcelLabels(lab, {i: str(i) for i in range(5)})
    rep = aggregate("unsurf", node, labels)
    counts = {p: int(np.sum(lab == p)) for p in labels.ids}
    weighted = sum(rep.parcel[p] * counts[p] for p in labels.ids if counts[p]) / len(node)
    assert weighted == pytest.approx(rep.subject, rel=1e-9, abs=1e-300)
