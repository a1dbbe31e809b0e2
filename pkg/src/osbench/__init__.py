"""Constructed observational data from randomized experiments.

Biased subsampling (or reweighting) of randomized trial tables yields
observational-style data whose unbiased effect is still known from the
source trial, so treatment-effect estimators can be benchmarked against
real ground truth.
"""

__version__ = "0.1.0"

from .biasing import BiasingSpec, BiasTerm, CompiledBias, calibrate_mean_half, compile_bias
from .data import (
    ColumnRole,
    Dataset,
    OutcomeSpan,
    SchemaConfig,
    binarize_treatment,
    load_table,
    outcome_range,
    subsample_uniform,
    write_csv,
)
from .errors import OsbenchError
from .estimators import (
    EffectEstimate,
    PropensityModel,
    estimate_aipw,
    estimate_iptw,
    estimate_naive,
    estimate_outcome_regression,
    estimate_psm,
    fit_propensity,
)
from .harness import (
    BenchmarkConfig,
    BenchmarkReport,
    TrialRecord,
    aggregate_by_source,
    complementary_outcome_error,
    ground_truth_effect,
    normalized_error,
    run_benchmark,
    run_trial,
    write_report,
)
from .sampling import (
    ConstructedStudy,
    apo_to_rct,
    export_study,
    hide_covariates,
    osapo_sample,
    osrct_sample,
    weighted_view,
)
from .synthetic import SyntheticConfig, expected_effect, gen_apo, true_effect

__all__ = [
    "BenchmarkConfig",
    "BenchmarkReport",
    "BiasTerm",
    "BiasingSpec",
    "ColumnRole",
    "CompiledBias",
    "ConstructedStudy",
    "Dataset",
    "EffectEstimate",
    "OsbenchError",
    "OutcomeSpan",
    "PropensityModel",
    "SchemaConfig",
    "SyntheticConfig",
    "TrialRecord",
    "aggregate_by_source",
    "apo_to_rct",
    "binarize_treatment",
    "calibrate_mean_half",
    "compile_bias",
    "complementary_outcome_error",
    "estimate_aipw",
    "estimate_iptw",
    "estimate_naive",
    "estimate_outcome_regression",
    "estimate_psm",
    "expected_effect",
    "export_study",
    "fit_propensity",
    "gen_apo",
    "ground_truth_effect",
    "hide_covariates",
    "load_table",
    "normalized_error",
    "osapo_sample",
    "osrct_sample",
    "outcome_range",
    "run_benchmark",
    "run_trial",
    "subsample_uniform",
    "true_effect",
    "weighted_view",
    "write_csv",
    "write_report",
]
