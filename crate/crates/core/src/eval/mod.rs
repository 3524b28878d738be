//! Metrics, the repeated-seed experiment harness and the synthetic
//! benchmark generator.

mod experiment;
mod metrics;
mod report;
mod sweep;
mod synthetic;

pub use experiment::{
    evaluate_models, item_knowledge, run_experiment, run_seed, score, score_trained, split_for_seed, train_model, DomainMetrics,
    ExperimentConfig, KnowledgeInput, ModelKind, ModelResult, Trained, TrainedModel, DEFAULT_RUNS,
};
pub use metrics::{f1_at_threshold, mae, mean_std, pooled_std};
pub use report::{ExperimentReport, Metric, ReportRow, SeedOutcome};
pub use sweep::{run_sweep, SweepConfig, SweepReport, DEFAULT_COLD_FRACTIONS};
pub use synthetic::{generate_synthetic, item_name, user_name, SyntheticData, SyntheticSpec, SyntheticTruth, RATING_QUANTILES};
