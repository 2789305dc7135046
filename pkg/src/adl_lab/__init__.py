"""Allocation policies and online severity control for forced deleveraging.

The package models per-round deleveraging as allocation over a capped
simplex: pick a total haircut budget, split it across opposite-side
winners within their closable capacities, and pay for tracking error
against the realized needed budget plus a fairness term for concentrating
the burden. Submodules cover the geometry (:mod:`adl_lab.model`),
allocation policies (:mod:`adl_lab.policies`), severity selection and
execution-price estimation (:mod:`adl_lab.severity`), losses and regret
accounting (:mod:`adl_lab.metrics`), stability probes
(:mod:`adl_lab.instability`), scenario and file formats
(:mod:`adl_lab.scenarios`), and the batch runner (:mod:`adl_lab.runner`).
"""

from __future__ import annotations

from .errors import (
    AdlError,
    BudgetExceedsCapacityError,
    ConfigError,
    DecompositionViolatedError,
    DegenerateEpisodeError,
    DegenerateSlopesError,
    EmptyFeasibleSetError,
    EmptyRoundError,
    GridInfeasibleError,
    InfeasiblePointError,
    InternalInvariantError,
    NoCapacityError,
    NoExecutionError,
    NoJumpWitnessError,
    NonpositiveExecPriceError,
    ScenarioFormatError,
)
from .instability import (
    ChurnResult,
    DiagnosticsReport,
    churn_experiment,
    effective_slope,
    monotonicity_counts,
    monotonicity_violations,
    perturbation_probe,
    rank_stability,
)
from .metrics import (
    EpisodeMetrics,
    FixedActionResult,
    LossWeights,
    RoundLossBreakdown,
    TrackingMetrics,
    best_fixed_action,
    concentration_ratio,
    cumulative_failure,
    decomposition_gap,
    empirical_round_loss,
    instance_bound,
    instance_bound_prefix,
    path_variation,
    policy_class_regret,
    regret,
    round_loss_asymmetric,
    round_loss_surrogate,
    static_regret,
    surrogate_ogd,
    surrogate_subgradient,
    tracking_metrics,
)
from .model import (
    Action,
    FeasibleSet,
    RoundState,
    ValidationReport,
    WinnerAccount,
    budget_tolerance,
    is_extreme_point,
    project_capped_simplex,
    validate_action,
)
from .policies import (
    IlpSolution,
    MinMaxSolution,
    PolicySpec,
    ScoredWinners,
    VectorMDController,
    integer_pro_rata,
    minmax_allocate,
    pro_rata_allocate,
    queue_allocate,
    solve_minmax_ilp,
    vector_md_step,
)
from .runner import (
    RunConfig,
    RunResult,
    audit_results,
    evaluate,
    load_config,
    parse_policy_line,
    resolve_scenario,
    write_outputs,
)
from .scenarios import (
    BenchmarkSeries,
    DiagnosticsRow,
    GroundTruth,
    RandomEpisodeParams,
    ResultRow,
    Scenario,
    format_number,
    gen_alternating_capacity,
    gen_churn_instance,
    gen_random_episode,
    load_replay_csv,
    parse_number,
    quantize,
    read_results_csv,
    write_diagnostics_csv,
    write_episode_json,
    write_results_csv,
    write_scenario_csv,
)
from .severity import (
    CloseSide,
    FillRecord,
    LinearImpactModel,
    SeverityController,
    SlopeEstimator,
    estimated_needed_budget,
    exec_price,
    fill_from_model,
    needed_budget,
    observed_slope,
    optimal_step_size,
    scalar_needed_budget,
    slope_ogd_step,
    theta_needed,
    theta_ogd_step,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "AdlError",
    "BenchmarkSeries",
    "BudgetExceedsCapacityError",
    "ChurnResult",
    "CloseSide",
    "ConfigError",
    "DecompositionViolatedError",
    "DegenerateEpisodeError",
    "DegenerateSlopesError",
    "DiagnosticsReport",
    "DiagnosticsRow",
    "EmptyFeasibleSetError",
    "EmptyRoundError",
    "EpisodeMetrics",
    "FeasibleSet",
    "FillRecord",
    "FixedActionResult",
    "GridInfeasibleError",
    "GroundTruth",
    "IlpSolution",
    "InfeasiblePointError",
    "InternalInvariantError",
    "LinearImpactModel",
    "LossWeights",
    "MinMaxSolution",
    "NoCapacityError",
    "NoExecutionError",
    "NoJumpWitnessError",
    "NonpositiveExecPriceError",
    "PolicySpec",
    "RandomEpisodeParams",
    "ResultRow",
    "RoundLossBreakdown",
    "RoundState",
    "RunConfig",
    "RunResult",
    "Scenario",
    "ScenarioFormatError",
    "ScoredWinners",
    "SeverityController",
    "SlopeEstimator",
    "TrackingMetrics",
    "ValidationReport",
    "VectorMDController",
    "WinnerAccount",
    "audit_results",
    "best_fixed_action",
    "budget_tolerance",
    "churn_experiment",
    "concentration_ratio",
    "cumulative_failure",
    "decomposition_gap",
    "effective_slope",
    "empirical_round_loss",
    "estimated_needed_budget",
    "evaluate",
    "exec_price",
    "fill_from_model",
    "format_number",
    "gen_alternating_capacity",
    "gen_churn_instance",
    "gen_random_episode",
    "instance_bound",
    "instance_bound_prefix",
    "integer_pro_rata",
    "is_extreme_point",
    "load_config",
    "load_replay_csv",
    "minmax_allocate",
    "monotonicity_counts",
    "monotonicity_violations",
    "needed_budget",
    "observed_slope",
    "optimal_step_size",
    "parse_number",
    "parse_policy_line",
    "path_variation",
    "perturbation_probe",
    "policy_class_regret",
    "pro_rata_allocate",
    "project_capped_simplex",
    "quantize",
    "queue_allocate",
    "rank_stability",
    "read_results_csv",
    "regret",
    "resolve_scenario",
    "round_loss_asymmetric",
    "round_loss_surrogate",
    "scalar_needed_budget",
    "slope_ogd_step",
    "solve_minmax_ilp",
    "static_regret",
    "surrogate_ogd",
    "surrogate_subgradient",
    "theta_needed",
    "theta_ogd_step",
    "tracking_metrics",
    "validate_action",
    "vector_md_step",
    "write_diagnostics_csv",
    "write_episode_json",
    "write_outputs",
    "write_results_csv",
    "write_scenario_csv",
]
