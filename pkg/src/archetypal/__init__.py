"""Archetype estimation by minimizing a regularized convex-hull risk."""

from .exceptions import (
    ConvergenceWarning,
    CSVParseError,
    DegenerateGeometryError,
    InvalidInputError,
    NumericalFailureError,
)
from .geometry import (
    HullProjector,
    ProjectionResult,
    affine_rank,
    distance_to_affine,
    project_convex_hull,
    project_onto_hull,
    project_simplex,
)
from .initialization import InitResult, initialize, spectral_init, successive_projections_init
from .risk import (
    RiskValue,
    archetype_loss,
    hull_sq_distance,
    loss_bound_slack,
    nearest_archetypes,
    regularized_risk,
    risk_gradient,
    spectrum,
)
from .solvers import FitReport, SolverConfig, fit, fit_altmin, fit_palm, fit_sgd, solve_weights
from .synth import (
    MixtureRecipe,
    NoisyDataset,
    SparsityBlock,
    default_recipe,
    gen_dataset,
    gen_smooth_archetypes,
    gen_toy_2d,
    gen_weights,
    load_matrix_csv,
    save_matrix_csv,
)
from .uniqueness import (
    AlphaSearchConfig,
    check_uniqueness_inequality,
    estimate_alpha,
    hexagon_family,
    internal_radius,
    robustness_bound,
    robustness_constants,
)

__version__ = "0.1.0"
