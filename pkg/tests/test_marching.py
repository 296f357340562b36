import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import field_volume, sphere_volume
from oracles import unsigned_distance
from unsurf.errors import EmptySurfaceError, InputError
from unsurf.geometry import (
    ClippedSurfaceWarning, GridSpec, Volume, euler_characteristic, extract_level_set,
    icosahedron, icosphere, is_closed_oriented, merge_meshes, mesh_to_sdf, torus_grid,
)
from unsurf.geometry.marching import case_table


def test_plane_vertices_exact():
    vol = field_volume(lambda x, y, z: z - 5.5, (8, 8, 12))
    with pytest.warns(ClippedSurfaceWarning):
        mesh = extract_level_set(vol, 0.0)
    assert np.all(mesh.vertices[:, 2] == 5.5)
    assert "clipped" in mesh.flags
    # outward normals point to +z (increasing values)
    assert np.all(mesh.face_normals()[:, 2] > 0.99)


def test_sphere_topology_and_radius():
    vol = sphere_volume(10.0, 28, tau=5.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        mesh = extract_level_set(vol, 0.0)
    assert euler_characteristic(mesh) == 2
    assert np.max(np.abs(np.linalg.norm(mesh.vertices, axis=1) - 10.0)) <= 0.1
    assert is_closed_oriented(mesh.triangles)
    assert mesh.signed_volume() > 0


def test_all_positive_volume_is_empty():
    vol = Volume(GridSpec((6, 6, 6)), np.ones((6, 6, 6)))
    with pytest.raises(EmptySurfaceError):
        extract_level_set(vol, 0.0)


def test_nonfinite_rejected_at_volume():
    data = np.zeros((4, 4, 4))
    data[1, 1, 1] = np.nan
    with pytest.raises(InputError):
        Volume(GridSpec((4, 4, 4)), data)


def test_nonzero_iso_level():
    vol = sphere_volume(6.0, 24)
    mesh = extract_level_set(vol, 2.0)
    assert np.max(np.abs(np.linalg.norm(mesh.vertices, axis=1) - 8.0)) <= 0.1


@pytest.mark.parametrize("config", range(1, 255))
def test_every_case_is_closed_and_oriented(config):
    # one inside-pattern cube embedded in a positive 4^3 block: the surface must close up
    data = np.ones((4, 4, 4))
    for c in range(8):
        if config >> c & 1:
            data[1 + (c & 1), 1 + (c >> 1 & 1), 1 + (c >> 2 & 1)] = -1.0
    mesh = extract_level_set(Volume(GridSpec((4, 4, 4)), data), 0.0)
    assert is_closed_oriented(mesh.triangles)
    assert mesh.signed_volume() > 0


def test_case_table_shape():
    table, counts = case_table()
    assert table.shape[0] == 256
    assert counts[0] == 0 and counts[255] == 0
    assert counts.max() <= 12


@settings(max_examples=60)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(3, 7))
def test_random_fields_close_up(seed, n):
    rng = np.random.default_rng(seed)
    data = np.ones((n + 2,) * 3)
    data[1:-1, 1:-1, 1:-1] = rng.uniform(-1, 1, (n,) * 3)
    if not np.any(data < 0):
        return
    mesh = extract_level_set(Volume(GridSpec(data.shape), data), 0.0)
    assert is_closed_oriented(mesh.triangles)
    assert not mesh.flags
    assert mesh.signed_volume() > 0
    assert euler_characteristic(mesh) % 2 == 0


def test_round_trip_within_voxel_diagonal():
    mesh = icosphere(3, 6.0)
    grid = GridSpec.centered(22, 0.75)
    out = extract_level_set(mesh_to_sdf(mesh, grid, 3.0), 0.0)
    diag = 0.75 * np.sqrt(3)
    sel = np.random.default_rng(0).choice(out.n_vertices, 200, replace=False)
    dist = [unsigned_distance(mesh.vertices, mesh.triangles, out.vertices[i]) for i in sel]
    assert max(dist) < diag


def test_euler_examples():
    assert euler_characteristic(icosahedron()) == 2
    assert euler_characteristic(torus_grid()) == 0
    assert euler_characteristic(merge_meshes(icosahedron(), icosahedron(center=(5, 0, 0)))) == 4


def test_torus_and_icosphere_are_closed():
    assert is_closed_oriented(torus_grid().triangles)
    assert is_closed_oriented(icosphere(2).triangles)


@given(seed=st.integers(0, 10_000))
def test_euler_invariant_under_reordering(seed):
    rng = np.random.default_rng(seed)
    mesh = [icosphere(1), torus_grid(7, 5)][seed % 2]
    perm = rng.permutation(mesh.n_vertices)
    inv = np.argsort(perm)
    tris = inv[mesh.triangles][rng.permutation(mesh.n_triangles)]
    tris = np.roll(tris, rng.integers(3), axis=1)
    from unsurf.geometry import TriangleMesh
    shuffled = TriangleMesh(mesh.vertices[perm], tris)
    assert euler_characteristic(shuffled) == euler_characteristic(mesh)

