import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_signed_distance, inside_by_parity, unsigned_distance
from unsurf import _accel
from unsurf.errors import InputError, OrientationError
from unsurf.geometry import GridSpec, TriangleMesh, icosahedron, icosphere, mesh_to_sdf, signed_distance
from unsurf.geometry.closest import ClosestPointIndex, closest_on_triangles_np


def test_icosahedron_origin_is_minus_inradius(backend):
    ico = icosahedron(1.0)
    expected = brute_signed_distance(ico.vertices, ico.triangles, np.zeros(3))
    got = signed_distance(ico, np.zeros((1, 3)))[0]
    assert got == pytest.approx(expected, abs=1e-12)
    assert got == pytest.approx(-0.7947, abs=1e-4)


def test_far_query_is_clamped(backend):
    grid = GridSpec((1, 1, 1), origin=(20.0, 0.0, 0.0))
    vol = mesh_to_sdf(icosphere(3, 10.0), grid, tau=5.0)
    assert vol.data[0, 0, 0] == 5.0


def test_near_query_against_oracle(backend):
    sph = icosphere(4, 10.0)
    p = np.array([10.5, 0.0, 0.0])
    got = signed_distance(sph, p[None])[0]
    oracle = unsigned_distance(sph.vertices, sph.triangles, p)
    assert got == pytest.approx(oracle, abs=1e-12)
    assert got == pytest.approx(0.5, abs=0.01)


def test_open_mesh_is_rejected():
    ico = icosahedron()
    open_mesh = TriangleMesh(ico.vertices, ico.triangles[:-1])
    with pytest.raises(OrientationError):
        mesh_to_sdf(open_mesh, GridSpec((4, 4, 4)))


def test_inconsistent_orientation_is_rejected():
    ico = icosahedron()
    t = np.array(ico.triangles)
    t[0] = t[0][::-1]
    with pytest.raises(OrientationError):
        mesh_to_sdf(TriangleMesh(ico.vertices, t), GridSpec((4, 4, 4)))


def test_inward_facing_mesh_is_rejected():
    ico = icosahedron()
    with pytest.raises(OrientationError):
        mesh_to_sdf(TriangleMesh(ico.vertices, ico.triangles[:, ::-1]), GridSpec((4, 4, 4)))


def test_empty_mesh_is_input_error():
    with pytest.raises(InputError):
        mesh_to_sdf(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), int)), GridSpec((4, 4, 4)))


def test_grid_matches_brute_force_oracle(backend):
    mesh = icosphere(1, 3.0)
    grid = GridSpec.centered(9, 1.0)
    vol = mesh_to_sdf(mesh, grid, tau=2.5)
    pts = grid.points()
    ref = np.array([brute_signed_distance(mesh.vertices, mesh.triangles, p) for p in pts])
    assert np.max(np.abs(vol.data.ravel() - np.clip(ref, -2.5, 2.5))) < 1e-5


def test_backends_agree_on_icosphere():
    mesh = icosphere(3, 10.0)
    grid = GridSpec.centered(20, 1.3)
    a = mesh_to_sdf(mesh, grid, 5.0, backend="numpy").data
    if not _accel.HAS_NUMBA:
        pytest.skip("numba not installed")
    b = mesh_to_sdf(mesh, grid, 5.0, backend="numba").data
    assert np.max(np.abs(a - b)) < 1e-10


def test_feature_codes_cover_regions():
    tri = np.array([[[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]])
    pts = np.array([[0.2, 0.2, 1.0], [-1, -1, 0], [2, -0.5, 0], [-0.5, 2, 0], [0.5, -1, 0], [1, 1, 0], [-1, 0.5, 0]])
    _, _, feat = closest_on_triangles_np(pts, np.repeat(tri, len(pts), axis=0))
    assert feat.tolist() == [0, 1, 2, 3, 4, 5, 6]


def _star_mesh(radii_noise, center, sub=2):
    base = icosphere(sub, 1.0)
    r = 3.0 + radii_noise[: base.n_vertices]
    return TriangleMesh(base.vertices * r[:, None] + center, base.triangles)


@given(
    noise=st.lists(st.floats(-0.8, 0.8), min_size=162, max_size=162),
    center=st.tuples(*[st.floats(-0.5, 0.5)] * 3),
    pts=st.lists(st.tuples(*[st.floats(-5, 5)] * 3), min_size=1, max_size=8),
)
def test_signed_distance_matches_oracle_property(noise, center, pts):
    mesh = _star_mesh(np.array(noise), np.array(center))
    pts = np.array(pts, dtype=float)
    idx = ClosestPointIndex(mesh)
    got = {b: idx.signed_distance(pts, b) for b in (["numba", "numpy"] if _accel.HAS_NUMBA else ["numpy"])}
    for i, p in enumerate(pts):
        d = unsigned_distance(mesh.vertices, mesh.triangles, p)
        for vals in got.values():
            assert abs(abs(vals[i]) - d) < 1e-9
        if d > 1e-6:
            inside = inside_by_parity(mesh.vertices, mesh.triangles, p)
            for vals in got.values():
                assert (vals[i] < 0) == inside


@given(n=st.integers(5, 14), spacing=st.floats(0.4, 1.5), shift=st.tuples(*[st.floats(-1, 1)] * 3))
def test_accelerated_grid_equals_brute_force_property(n, spacing, shift):
    mesh = icosphere(1, 2.5, center=shift)
    grid = GridSpec.centered(n, spacing)
    pts = grid.points()
    sel = np.random.default_rng(n).choice(len(pts), size=min(len(pts), 60), replace=False)
    ref = np.array([brute_signed_distance(mesh.vertices, mesh.triangles, pts[i]) for i in sel])
    for b in (["numba", "numpy"] if _accel.HAS_NUMBA else ["numpy"]):
        vol = mesh_to_sdf(mesh, grid, tau=3.0, backend=b)
        assert np.max(np.abs(vol.data.ravel()[sel] - np.clip(ref, -3, 3))) < 1e-5
