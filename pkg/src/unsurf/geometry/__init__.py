from .closest import BVH, ClosestPointIndex
from .marching import ClippedSurfaceWarning, extract_level_set
from .mesh import (
    TriangleMesh,
    angle_weighted_vertex_normals,
    check_closed_oriented,
    euler_characteristic,
    icosahedron,
    icosphere,
    is_closed_oriented,
    merge_meshes,
    smooth_mesh,
    torus_grid,
)
from .pial import GeometryParams, SurfacePair, place_pial, project_to_level_set
from .sampling import gradient, in_domain, trilinear_sample
from .sdf import mesh_to_sdf, signed_distance
from .volume import GridSpec, Volume
