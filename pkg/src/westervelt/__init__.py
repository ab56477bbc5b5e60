"""Finite element solver for nonlinear acoustics with adaptive absorbing boundaries."""

from .angles import (
    AngleConfig,
    AngleField,
    analytical_plate_angle,
    angle_from_gradient,
    element_gradient,
    element_gradients,
    update_angles,
)
from .assembly import (
    DegeneracyError,
    PhysParams,
    assemble_abc_matrix,
    assemble_abc_vector,
    assemble_laplacian,
    assemble_mass,
    assemble_source,
    dirichlet_rhs,
    tensor_action,
)
from .integrator import (
    FixedPointError,
    Operators,
    SchemeParams,
    State,
    Trajectory,
    initial_state,
    newmark_update,
    run,
    scheme_params,
    step,
)
from .mesh import (
    BoundaryTag,
    FacetGeom,
    Mesh,
    MeshError,
    boundary_geometry,
    element_measure,
    element_measures,
    facet_geometry,
    generate_channel,
    generate_plate_octant,
    generate_square,
    make_mesh,
    parse_msh,
    write_msh,
)
from .output import read_error_csv, write_angle_csv, write_error_csv, write_vtk
from .scenarios import (
    ConfigError,
    ErrorReport,
    Excitation,
    MeshSpec,
    Scenario,
    ScenarioResult,
    SourceSpec,
    Variant,
    VariantResult,
    build_mesh,
    energy_diagnostic,
    excitation_signal,
    gaussian_source,
    improvement,
    load_scenario,
    node_injection,
    parse_variant,
    pressure_field,
    relative_l2_error,
    restrict_reference,
    run_scenario,
    scenario_operators,
    space_time_error,
    water,
)
from .solver import SolveOptions, SolverError, solve_spd

__all__ = [
    "AngleConfig",
    "AngleField",
    "BoundaryTag",
    "ConfigError",
    "DegeneracyError",
    "ErrorReport",
    "Excitation",
    "FacetGeom",
    "FixedPointError",
    "Mesh",
    "MeshError",
    "MeshSpec",
    "Operators",
    "PhysParams",
    "Scenario",
    "ScenarioResult",
    "SchemeParams",
    "SolveOptions",
    "SolverError",
    "SourceSpec",
    "State",
    "Trajectory",
    "Variant",
    "VariantResult",
    "analytical_plate_angle",
    "angle_from_gradient",
    "assemble_abc_matrix",
    "assemble_abc_vector",
    "assemble_laplacian",
    "assemble_mass",
    "assemble_source",
    "boundary_geometry",
    "build_mesh",
    "dirichlet_rhs",
    "element_gradient",
    "element_gradients",
    "element_measure",
    "element_measures",
    "energy_diagnostic",
    "excitation_signal",
    "facet_geometry",
    "gaussian_source",
    "generate_channel",
    "generate_plate_octant",
    "generate_square",
    "improvement",
    "initial_state",
    "load_scenario",
    "make_mesh",
    "newmark_update",
    "node_injection",
    "parse_msh",
    "parse_variant",
    "pressure_field",
    "read_error_csv",
    "relative_l2_error",
    "restrict_reference",
    "run",
    "run_scenario",
    "scenario_operators",
    "scheme_params",
    "solve_spd",
    "space_time_error",
    "step",
    "tensor_action",
    "update_angles",
    "water",
    "write_angle_csv",
    "write_error_csv",
    "write_msh",
    "write_vtk",
]
