"""Directional-distance-field shape metric and the solvers built on it."""

from ._kernels import DEFAULT_BACKEND, HAVE_EXT
from .ddf import (
    DdfConfig,
    RefGenConfig,
    ReferencePointSet,
    ddf_mesh,
    ddf_point_cloud,
    generate_adaptive_reference_points,
    generate_reference_points,
)
from .deform import (
    DeformRegConfig,
    DeformationGraph,
    TemplateFitConfig,
    build_deformation_graph,
    deform_vertices,
    fit_template,
    register_nonrigid,
)
from .errors import (
    ConfigError,
    DdmError,
    InvalidInputError,
    NumericalAbort,
    SurfaceFormatError,
)
from .evaluation import (
    EvalReport,
    flow_metrics,
    fscore,
    rotation_error,
    success_rate,
    translation_error,
    v2v,
    vertex_rmse,
)
from .flow import FlowConfig, FlowField, estimate_scene_flow
from .geometry import (
    CloudIndex,
    MeshIndex,
    PointCloud,
    TriangleMesh,
    build_index,
    closest_point_on_mesh,
    closest_point_on_triangle,
    sample_points_on_mesh,
)
from .io import load_surface, save_surface
from .metric import MetricConfig, MetricValue, chamfer, ddm, ddm_grad, p2f
from .optim import OptimConfig, OptimTrace, optimize
from .rigid import RigidRegConfig, RigidTransform, apply_rigid, register_rigid
from .rotation import so3_exp, so3_left_jacobian, so3_log

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_BACKEND",
    "HAVE_EXT",
    "__version__",
    "CloudIndex",
    "ConfigError",
    "DdfConfig",
    "DdmError",
    "DeformRegConfig",
    "DeformationGraph",
    "EvalReport",
    "FlowConfig",
    "FlowField",
    "InvalidInputError",
    "MeshIndex",
    "MetricConfig",
    "MetricValue",
    "NumericalAbort",
    "OptimConfig",
    "OptimTrace",
    "PointCloud",
    "RefGenConfig",
    "ReferencePointSet",
    "RigidRegConfig",
    "RigidTransform",
    "SurfaceFormatError",
    "TemplateFitConfig",
    "TriangleMesh",
    "apply_rigid",
    "build_deformation_graph",
    "build_index",
    "chamfer",
    "closest_point_on_mesh",
    "closest_point_on_triangle",
    "ddf_mesh",
    "ddf_point_cloud",
    "ddm",
    "ddm_grad",
    "deform_vertices",
    "estimate_scene_flow",
    "fit_template",
    "flow_metrics",
    "fscore",
    "generate_adaptive_reference_points",
    "generate_reference_points",
    "load_surface",
    "optimize",
    "p2f",
    "register_nonrigid",
    "register_rigid",
    "rotation_error",
    "sample_points_on_mesh",
    "save_surface",
    "so3_exp",
    "so3_left_jacobian",
    "so3_log",
    "success_rate",
    "translation_error",
    "v2v",
    "vertex_rmse",
]
