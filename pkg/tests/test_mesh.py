import numpy as np
import pytest

from unsurf.errors import InputError
from unsurf.geometry import TriangleMesh, icosahedron, icosphere, smooth_mesh


def test_zero_iterations_is_identity():
    ico = icosahedron()
    assert smooth_mesh(ico, 0, 0.5) is ico


def test_icosahedron_contracts_uniformly():
    out = smooth_mesh(icosahedron(), 1, 1.0)
    r = np.linalg.norm(out.vertices, axis=1)
    assert np.ptp(r) < 1e-9
    assert r[0] < 1.0


def test_noisy_sphere_gets_rounder():
    sph = icosphere(3, 1.0)
    rng = np.random.default_rng(3)
    r = 10.0 + rng.uniform(-0.5, 0.5, sph.n_vertices)
    noisy = sph.with_vertices(sph.vertices * r[:, None])
    out = smooth_mesh(noisy, 10, 0.5)
    before = np.std(np.linalg.norm(noisy.vertices, axis=1))
    after = np.std(np.linalg.norm(out.vertices, axis=1))
    assert after < before


def test_smoothing_keeps_connectivity():
    sph = icosphere(2)
    out = smooth_mesh(sph, 3, 0.3)
    assert np.array_equal(out.triangles, sph.triangles)


@pytest.mark.parametrize("iterations,weight", [(-1, 0.5), (1, 0.0), (1, 1.5)])
def test_smoothing_rejects_bad_params(iterations, weight):
    with pytest.raises(InputError):
        smooth_mesh(icosahedron(), iterations, weight)


def test_mesh_validation():
    with pytest.raises(InputError):
        TriangleMesh(np.zeros((3, 3)), [[0, 1, 3]])
    with pytest.raises(InputError):
        TriangleMesh([[0, 0, np.inf], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    degenerate = TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    with pytest.raises(InputError):
        degenerate.validate()
    with pytest.raises(InputError):
        icosahedron().with_channels(bad=np.zeros(3))


def test_mesh_is_immutable():
    ico = icosahedron()
    with pytest.raises(ValueError):
        ico.vertices[0, 0] = 5.0


def test_vertex_normals_point_outward():
    sph = icosphere(2, 3.0)
    n = sph.vertex_normals()
    assert np.allclose(n, sph.vertices / 3.0, atol=0.02)
