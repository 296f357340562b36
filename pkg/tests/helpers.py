import numpy as np

from unsurf.geometry import GridSpec, Volume


def sphere_volume(radius, n, spacing=1.0, tau=None, center=(0.0, 0.0, 0.0)):
    grid = GridSpec.centered(n, spacing)
    d = np.linalg.norm(grid.points() - np.asarray(center), axis=1) - radius
    if tau is not None:
        d = np.clip(d, -tau, tau)
    return Volume(grid, d.reshape(grid.dims))


def field_volume(fn, dims, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    grid = GridSpec(dims, spacing, origin)
    p = grid.points()
    return Volume(grid, fn(p[:, 0], p[:, 1], p[:, 2]).reshape(grid.dims))


def medial_mask(vol: Volume, mesh, jump=3.0, margin=2):
    """Voxels within ``margin`` voxels of the medial axis of ``mesh``.

    A medial crossing shows up as neighbouring voxels whose closest surface
    points are far apart; those voxels are dilated by ``margin``.
    """
    from scipy import ndimage

    from unsurf.geometry import ClosestPointIndex

    _, q, _, _ = ClosestPointIndex(mesh).query(vol.grid.points())
    q = q.reshape(vol.dims + (3,))
    hit = np.zeros(vol.dims, dtype=bool)
    for ax in range(3):
        far = np.linalg.norm(np.diff(q, axis=ax), axis=-1) > jump * max(vol.spacing)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        hit[tuple(lo)] |= far
        hit[tuple(hi)] |= far
    return ndimage.binary_dilation(hit, iterations=margin)


def eikonal_fraction(vol: Volume, tau, medial, tol=0.05):
    """Share of checked voxels with central-difference |grad| within ``tol`` of 1.

    Checked: 0.1 tau < |D| < 0.9 tau, off the medial mask, interior to the
    grid, and with no clamped value inside the difference stencil.
    """
    from scipy import ndimage

    from unsurf.geometry.sampling import gradient

    d = vol.data
    g = np.linalg.norm(gradient(vol), axis=-1)
    clamped = np.abs(d) >= tau - 1e-12
    stencil = ndimage.binary_dilation(clamped, structure=ndimage.generate_binary_structure(3, 1))
    sel = (np.abs(d) > 0.1 * tau) & (np.abs(d) < 0.9 * tau) & ~medial & ~stencil
    sel[[0, -1]] = False
    sel[:, [0, -1]] = False
    sel[:, :, [0, -1]] = False
    return float(np.mean(np.abs(g[sel] - 1.0) <= tol)), int(sel.sum())
