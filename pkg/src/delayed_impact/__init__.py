"""Selection policies for two groups and their delayed effect on score distributions."""
from ._backend import BACKEND
from .analysis import (
    AbsoluteRegime,
    HypothesisError,
    OutcomeRegime,
    Problem,
    RelativeRegime,
    SpecialBetas,
    classify_regime,
    cor_avoid_harm_interval,
    cor_dp_overeager_threshold,
    cor_eqopt_overeager_threshold,
    cor_relative_improvement_intervals,
    eqopt_underloan_predicate,
    special_betas,
    sweep,
    verify_underselection,
)
from .core import (
    GroupSpec,
    MeasurementError,
    ModelError,
    ScoreDistribution,
    ThresholdPolicy,
    apply_measurement_error,
    cdf_dominates,
    inverse_selection_rate,
    policies_equivalent,
    policy_from_threshold,
    quantile,
    quantile_plus,
    selection_rate,
)
from .objectives import (
    ConstraintWeights,
    OutcomeFn,
    PiecewiseLinearCurve,
    UtilityFn,
    check_institution_assumption,
    group_utility,
    outcome_change,
    outcome_curve,
    total_utility,
    tpr,
    transfer_G,
    transfer_T,
    utility_curve,
)
from .solvers import (
    PreconditionError,
    SoftPenalty,
    SolverResult,
    solve,
    solve_demparity,
    solve_eqopt,
    solve_linear_constraint,
    solve_maxutil,
    solve_outcome_based,
    solve_soft,
)

__version__ = "0.1.0"
