"""Perturbation-series solver for linear evolution equations in scales
of weighted sequence spaces, with applications to infinite ODE systems
and discretized birth-and-death correlation hierarchies."""

__version__ = "0.1.0"

from .errors import (
    ClosureUnsound,
    ContractionCertificateFailed,
    ExistenceHorizonExceeded,
    HorizonExhausted,
    HorizonTooTight,
    InvalidInput,
    InvalidScalePair,
    OracleFailure,
    RangeOverflow,
    ScaleEvolveError,
    TimeOrderViolation,
    TruncationUnsoundWarning,
)
from .evolution_core import (
    DiagonalGenerator,
    Propagator,
    PropagatorSpec,
    diag_propagate,
    estimate_K,
    oracle_propagate,
    residual_A3,
    sparse_rk4,
)
from .logistic import (
    GReport,
    Hierarchy,
    HierarchyOperator,
    LogisticParams,
    build_discrete_operators,
    check_G,
    continuum_bounds,
    correlation_norm,
    evolve_hierarchy,
    flatten_hierarchy,
    hierarchy_norm,
    hierarchy_pairing,
    k_inverse,
    k_transform,
    lp_integral,
    random_hierarchy,
    stacked_generator,
    symmetrize_kernel,
    unflatten_hierarchy,
)
from .ode_system import (
    OdeModel,
    StudyReport,
    ValidationReport,
    build_horizon,
    contraction_propagator,
    solve_system,
    truncation_study,
    validate_conditions,
)
from .ovcyannikov import (
    EvolutionResult,
    EvolveOptions,
    HorizonTable,
    PropertyCheck,
    StabilityReport,
    WConfig,
    backward_evolve,
    dual_evolve,
    evolution_property_residual,
    existence_time,
    forward_evolve,
    global_evolve,
    stability_compare,
)
from .scale_operator import (
    MajorantM,
    OperatorFamily,
    OperatorMatrix,
    apply,
    band_matrix,
    diagonal_matrix,
    fit_majorant,
    identity_matrix,
    operator_norm,
    shift_matrix,
)
from .scale_space import (
    DualVector,
    ScaleVector,
    basis_vector,
    dual_norm,
    dual_pairing,
    norm_alpha,
    truncate,
)
