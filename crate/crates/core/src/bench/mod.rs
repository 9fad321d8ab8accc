//! Synthetic problem generators, feasibility checks, deployment scoring and
//! experiment orchestration.

mod experiment;
mod feasibility;
mod generators;
mod structured;

pub use experiment::{
    accuracy_metrics, load_baselines, run_experiment, run_problem, AccuracyMetrics, ExperimentConfig, ExperimentKind,
    ExperimentResults, PredictionRecord, ProblemSpec, RunOptions, RunRecord, TrainingSummary,
};
pub use feasibility::{
    deployment_score, feasibility_check, DeploymentScore, FeasibilityVerdict, Recommendation, DATA_FACTOR, GAP_FRACTION,
    MAX_CONDITION, MAX_DIMENSION, MIN_DIMENSION, MIN_SIGNAL_RATIO, RELATIVE_GAP_FLOOR,
};
pub use generators::{
    gen_regime, gen_scaling, regime_sigma, scaling_sigma, GeneratedProblem, ProblemMetadata, RegimeKind, RegimeSpec,
    ScalingSpec, REGIME_SPACING, SCALING_DIMENSIONS, SCALING_SPACING, SHIFT_FRACTION, SIGMA_FLOOR, SPECTRUM_OFFSET,
};
pub use structured::{structured_perturbation, StructuredKind, StructuredParams};
