"""Staggered discontinuous Galerkin solver for unsteady
Darcy-Forchheimer-Brinkman flow on polygonal meshes."""

from .forms import (
    DragMassAssembler,
    assemble_divergence,
    assemble_divergence_adjoint,
    assemble_load,
    assemble_mass,
    assemble_trace_jump,
    assemble_trace_jump_adjoint,
    assemble_velocity_gradient,
    assemble_velocity_gradient_adjoint,
    pressure_integral,
)
from .mesh import (
    MeshError,
    MeshFormatError,
    MeshGeometryError,
    MeshQualityReport,
    MeshTopologyError,
    PrimalMesh,
    StaggeredMesh,
    build_rectangle_mesh,
    build_staggered,
    mesh_quality,
    read_polygon_mesh,
)
from .solver import (
    BACKWARD_EULER,
    BDF2,
    ModelParams,
    Operators,
    PicardConfig,
    SolverError,
    StepReport,
    TransientResult,
    build_operators,
    run_transient,
    write_step_log,
)
from .spaces import (
    GRADIENT,
    PRESSURE,
    TRACE,
    VELOCITY,
    DofSpace,
    FieldCoefficients,
    build_space,
    evaluate_field,
    interpolate,
)
from .verify import (
    ManufacturedProblem,
    StudyRow,
    convergence_study,
    default_steps,
    error_l2,
    observed_orders,
    pressure_seminorm,
    run_manufactured,
    z2_norm,
)

__version__ = "0.1.0"

__all__ = [
    "BACKWARD_EULER",
    "BDF2",
    "DofSpace",
    "DragMassAssembler",
    "FieldCoefficients",
    "GRADIENT",
    "ManufacturedProblem",
    "MeshError",
    "MeshFormatError",
    "MeshGeometryError",
    "MeshQualityReport",
    "MeshTopologyError",
    "ModelParams",
    "Operators",
    "PRESSURE",
    "PicardConfig",
    "PrimalMesh",
    "SolverError",
    "StaggeredMesh",
    "StepReport",
    "StudyRow",
    "TRACE",
    "TransientResult",
    "VELOCITY",
    "assemble_divergence",
    "assemble_divergence_adjoint",
    "assemble_load",
    "assemble_mass",
    "assemble_trace_jump",
    "assemble_trace_jump_adjoint",
    "assemble_velocity_gradient",
    "assemble_velocity_gradient_adjoint",
    "build_operators",
    "build_rectangle_mesh",
    "build_space",
    "build_staggered",
    "convergence_study",
    "default_steps",
    "error_l2",
    "evaluate_field",
    "interpolate",
    "mesh_quality",
    "observed_orders",
    "pressure_integral",
    "pressure_seminorm",
    "read_polygon_mesh",
    "run_manufactured",
    "run_transient",
    "write_step_log",
    "z2_norm",
]
