"""Numerical laboratory for a stiff-pressure growth model and its free-boundary limit."""

from .errors import (
    ConfigError,
    ConstructionFailureError,
    InvalidDataError,
    InvalidParameterError,
    NumericalBlowupError,
    ProjectionFailureError,
    StepFailureError,
    StiffPressureError,
    TransformRangeError,
)
from .model import (
    Field,
    Grid,
    GrowthLaw,
    ModelParams,
    density_of_phase,
    density_of_pressure,
    phase_field_of_density,
    phase_of_density,
    phase_of_pressure,
    positive_part,
    pressure_of_density,
    pressure_of_phase,
)
from .operators import BoundaryCondition
from .elliptic import closed_form_interval_profile, solve_reaction_profile
from .pme import (
    PmeState,
    StepControl,
    effective_diffusivity,
    pme_run,
    pme_step,
    prepare_initial_density,
    stable_dt,
    total_mass,
)
from .limit import (
    FreeBoundary,
    LimitRunResult,
    LimitState,
    NucleationEvent,
    extract_free_boundary,
    limit_run,
    limit_step,
    project_initial_data,
)

__version__ = "0.1.0"
