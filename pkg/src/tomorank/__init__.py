"""Rank-based model selection for multi-qubit quantum state tomography.

Simulates Pauli-setting count data, fits fixed-rank density-matrix models by
maximum likelihood, selects the rank with AIC/BIC, and validates fits with
Fisher-information asymptotics, Pearson chi-square tests and a parametric
bootstrap.
"""

__version__ = "0.1.0"

from .pauli import (
    CountsDataset,
    PauliCoefficients,
    all_outcomes,
    all_settings,
    outcome_index,
    outcome_probabilities,
    pauli_expand,
    pauli_reconstruct,
    probability_matrix,
    setting_basis,
    simulate_dataset,
)
from .states import (
    Chart,
    CholeskyChart,
    DensityMatrix,
    PinnedChart,
    PureStateChart,
    TrapezoidalFactor,
    hs_distance_sq,
    random_state,
    state_from_factor,
)
from .inference import (
    ChartFit,
    FitError,
    ModelFit,
    fit_chart,
    fit_full_iterative,
    fit_rank,
    log_likelihood,
    log_likelihood_gradient,
    naive_estimate,
)
from .selection import (
    RankEntry,
    RankScan,
    information_criteria,
    log_likelihood_ratio,
    model_dim,
    scan_ranks,
)
from .stats import (
    ChiSquare,
    FisherPair,
    SingularModelError,
    TestResult,
    asymptotic_mse,
    bootstrap_pearson_test,
    coarse_grained_fisher,
    fisher_information,
    hs_metric,
    measurement_kl,
    pearson_chi2_test,
    pearson_df,
    pearson_statistic,
    quantum_mse_bound,
)
from .io import ValidationError, load_dataset, load_state, save_dataset, save_state
from .studies import (
    StudyFailure,
    StudyReport,
    draw_significant_state,
    run_study1,
    run_study2,
    study2_states,
    write_report,
)

__all__ = [
    "CountsDataset",
    "PauliCoefficients",
    "all_outcomes",
    "all_settings",
    "outcome_index",
    "outcome_probabilities",
    "pauli_expand",
    "pauli_reconstruct",
    "probability_matrix",
    "setting_basis",
    "simulate_dataset",
    "Chart",
    "CholeskyChart",
    "DensityMatrix",
    "PinnedChart",
    "PureStateChart",
    "TrapezoidalFactor",
    "hs_distance_sq",
    "random_state",
    "state_from_factor",
    "ChartFit",
    "FitError",
    "ModelFit",
    "fit_chart",
    "fit_full_iterative",
    "fit_rank",
    "log_likelihood",
    "log_likelihood_gradient",
    "naive_estimate",
    "RankEntry",
    "RankScan",
    "information_criteria",
    "log_likelihood_ratio",
    "model_dim",
    "scan_ranks",
    "ChiSquare",
    "FisherPair",
    "SingularModelError",
    "TestResult",
    "asymptotic_mse",
    "bootstrap_pearson_test",
    "coarse_grained_fisher",
    "fisher_information",
    "hs_metric",
    "measurement_kl",
    "pearson_chi2_test",
    "pearson_df",
    "pearson_statistic",
    "quantum_mse_bound",
    "ValidationError",
    "load_dataset",
    "load_state",
    "save_dataset",
    "save_state",
    "StudyFailure",
    "StudyReport",
    "draw_significant_state",
    "run_study1",
    "run_study2",
    "study2_states",
    "write_report",
]
