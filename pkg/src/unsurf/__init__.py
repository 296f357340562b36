"""Uncertainty of implicit-surface reconstructions.

Mesh/SDF geometry, the squared-discrepancy (UNSURF) and ensemble-variance
uncertainty measures, phantom simulation, QC statistics and file I/O.
"""
from .errors import (
    EmptySurfaceError,
    FormatError,
    GridError,
    InputError,
    InsufficientSamplesError,
    OrientationError,
    OutOfBoundsError,
    RankError,
    SpecError,
    StageError,
    UndefinedStatisticError,
    UnsurfError,
    ValidationError,
)
from .geometry import (
    GeometryParams,
    GridSpec,
    SurfacePair,
    TriangleMesh,
    Volume,
    euler_characteristic,
    extract_level_set,
    mesh_to_sdf,
    place_pial,
    smooth_mesh,
    trilinear_sample,
)
from .phantom import DegradationSpec, PhantomSpec, make_phantom, simulate_prediction, thickness, thickness_error
from .stats import (
    FilterCurve,
    SubjectRecord,
    cohens_d,
    correlation_report,
    effect_size_curve,
    filter_curve,
    glm_residualize,
    nested_filter_curve,
    pearson,
    spearman,
)
from .uncertainty import (
    EnsembleSDF,
    ParcelLabels,
    UncertaintyReport,
    ensemble_mean,
    ensemble_variance,
    node_uncertainty,
    parcel_uncertainty,
    sdf_l2_loss,
    subject_uncertainty,
    unsurf_map,
)

__version__ = "0.1.0"
