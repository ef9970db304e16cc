"""Circle fitting with geometric and algebraic (Kasa, Pratt, Taubin, Hyper) fits,
their small-noise error analysis, and a Monte Carlo benchmark harness."""

from .algebraic import (
    ConstraintMatrix,
    FitResult,
    GepSolution,
    constraint_matrix,
    design_matrix,
    fit_algebraic,
    kasa_fit_linear,
    moment_matrix,
    solve_gep,
)
from .analysis import (
    BiasVector,
    MseBreakdown,
    TruePointFrame,
    algebraic_bias_full,
    algebraic_bias_natural,
    essential_bias,
    geometric_bias_full,
    kasa_essential_bias_arc,
    kcr_covariance,
    mse_decompose,
    transition_jacobian,
    w_matrix,
)
from .bench import (
    ExperimentConfig,
    ExperimentReport,
    generate_arc_points,
    load_config,
    perturb,
    run_experiment,
)
from .errors import (
    CircleFitError,
    DegenerateConicError,
    DegenerateDataError,
    InputError,
    NumericalError,
)
from .geometric import LmOptions, LmReport, default_init, fit_geometric, residuals_jacobian
from .geometry import (
    AlgParams,
    CircleGeom,
    Line,
    alg_to_geom,
    geom_to_alg,
    objective_geometric,
    signed_distance,
)

__version__ = "0.1.0"
