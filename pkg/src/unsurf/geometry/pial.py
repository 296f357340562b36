from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from .mesh import TriangleMesh, check_closed_oriented
from .sampling import in_domain, trilinear_sample
from .volume import Volume


@dataclass(frozen=True)
class GeometryParams:
    """Knobs of the surface-placement stage.

    ``smooth_*`` drive the white-surface regularisation, ``pial_*`` the
    outward march toward the pial zero level.
    """

    tau: float = 5.0
    smooth_iterations: int = 10
    smooth_weight: float = 0.5
    project_iterations: int = 3
    pial_step: float = 0.5
    pial_max_displacement: float = 5.0
    pial_tolerance: float = 0.01
    pial_max_iterations: int = 200

    def __post_init__(self):
        if not self.tau > 0:
            raise InputError("tau must be > 0")
        if not self.pial_step > 0:
            raise InputError("pial_step must be > 0")
        if not self.pial_tolerance > 0:
            raise InputError("pial_tolerance must be > 0")
        if self.pial_max_displacement < 0:
            raise InputError("pial_max_displacement must be >= 0")
        if self.smooth_iterations < 0 or self.project_iterations < 0:
            raise InputError("iteration counts must be >= 0")
        if not 0 < self.smooth_weight <= 1:
            raise InputError("smooth_weight must be in (0, 1]")


@dataclass(frozen=True)
class SurfacePair:
    white: TriangleMesh
    pial: TriangleMesh
    correspondence: bool = True
    displacement: np.ndarray = None
    frozen: np.ndarray = None

    def __post_init__(self):
        if self.correspondence and self.white.n_vertices != self.pial.n_vertices:
            raise InputError("corresponding surfaces need equal vertex counts")


def _face_normals(v, t):
    c = v[t]
    return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])


def place_pial(white: TriangleMesh, pial_sdf: Volume, params: GeometryParams = GeometryParams()) -> SurfacePair:
    """March every white vertex along its outward normal onto the pial zero level.

    Each iteration moves a vertex by ``min(pial_step, |sdf|)`` toward the zero
    level, with its total displacement kept in ``[0, pial_max_displacement]``.
    A vertex stops when ``|sdf| <= pial_tolerance``, when it hits the
    displacement limit, or when its step would flip an incident triangle
    (it is then frozen where it stands).
    """
    white.validate()
    check_closed_oriented(white.triangles)
    verts = white.vertices
    tris = white.triangles
    # raises OutOfBoundsError naming the vertices outside the grid
    trilinear_sample(pial_sdf, verts)

    normals = white.vertex_normals()
    disp = np.zeros(white.n_vertices)
    frozen = np.zeros(white.n_vertices, dtype=bool)
    active = np.ones(white.n_vertices, dtype=bool)
    pos = np.array(verts)
    vt_rows = np.repeat(np.arange(len(tris)), 3)
    vt_cols = tris.ravel()

    for _ in range(params.pial_max_iterations):
        ids = np.flatnonzero(active)
        if len(ids) == 0:
            break
        val = trilinear_sample(pial_sdf, pos[ids])
        done = np.abs(val) <= params.pial_tolerance
        step = -np.sign(val) * np.minimum(params.pial_step, np.abs(val))
        new_disp = np.clip(disp[ids] + step, 0.0, params.pial_max_displacement)
        stuck = np.abs(new_disp - disp[ids]) <= 1e-12
        keep = ~(done | stuck)
        moving = ids[keep]
        active[ids[~keep]] = False
        if len(moving) == 0:
            continue
        cand = pos.copy()
        cand_disp = disp.copy()
        cand_disp[moving] = new_disp[keep]
        cand[moving] = verts[moving] + normals[moving] * cand_disp[moving, None]
        outside = ~in_domain(pial_sdf, cand[moving])
        if outside.any():
            off = moving[outside]
            frozen[off] = True
            active[off] = False
            cand[off] = pos[off]
            cand_disp[off] = disp[off]
            moving = moving[~outside]
        ref = _face_normals(pos, tris)
        moved = np.zeros(white.n_vertices, dtype=bool)
        moved[moving] = True
        while True:
            new = _face_normals(cand, tris)
            flipped = np.einsum("ij,ij->i", new, ref) <= 0
            flipped &= moved[tris].any(axis=1)
            if not flipped.any():
                break
            culprits = np.unique(vt_cols[flipped[vt_rows] & moved[vt_cols]])
            cand[culprits] = pos[culprits]
            cand_disp[culprits] = disp[culprits]
            moved[culprits] = False
            frozen[culprits] = True
            active[culprits] = False
        pos = cand
        disp = cand_disp

    pial = TriangleMesh(pos, tris)
    return SurfacePair(white, pial, True, disp, frozen)


def project_to_level_set(mesh: TriangleMesh, sdf: Volume, iterations: int = 3, max_step: float = 1.0):
    """Newton steps pulling vertices onto the zero level of ``sdf``."""
    from .sampling import gradient

    if iterations == 0:
        return mesh
    g = gradient(sdf)
    gvols = [sdf.with_data(g[..., k]) for k in range(3)]
    v = np.array(mesh.vertices)
    for _ in range(iterations):
        ok = in_domain(sdf, v)
        val = trilinear_sample(sdf, v[ok])
        grad = np.stack([trilinear_sample(gv, v[ok]) for gv in gvols], axis=1)
        gn2 = np.maximum(np.einsum("ij,ij->i", grad, grad), 1e-12)
        step = -(val / gn2)[:, None] * grad
        norm = np.linalg.norm(step, axis=1, keepdims=True)
        step *= np.minimum(1.0, max_step / np.maximum(norm, 1e-300))
        v[ok] += step
    return mesh.with_vertices(v)
