"""Thin insulating layers: layered FEM solves, the effective Robin limit and its first-order energy."""

from .config import RunConfig, StudyConfig, StudyKind, parse_config, parse_text
from .energy import (
    EnergyReport,
    approx_G,
    delta_F,
    energy_F0,
    energy_F_eps,
    first_order,
    layer_tangential_energy,
    limit_weak_residual,
    pulled_back_layer_energy,
    richardson,
)
from .exceptions import (
    AssemblyError,
    ConfigError,
    FocalError,
    GeometryError,
    InvalidCurveError,
    LayerLabError,
    MeshError,
    NonUniqueProjectionError,
    OutOfTubeError,
    SolverError,
)
from .experiments import (
    StudyResult,
    optimize_profile,
    rate_study,
    run_study,
    scaling_study,
    stretch_convergence_study,
)
from .geometry import (
    BoundaryField,
    ClosedCurve,
    FourierSeries,
    LayerGeometry,
    fiber_integral,
    jacobians,
    project,
    stretch,
)
from .meshing import LayerMesh, MeshParams, build_mesh, mesh_diagnostics, read_mesh, write_mesh
from .oracle import RadialConfig, radial_energy_report, radial_limit, radial_rate_table, radial_solution
from .solver import (
    ReferenceLayerField,
    ScalarField,
    limit_profile,
    pullback,
    recovery_sequence,
    solve_diffraction,
    solve_limit,
)

__version__ = "0.1.0"
