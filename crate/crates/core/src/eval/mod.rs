//! Dataset loading, execution accuracy, difficulty and cost statistics, and
//! the evaluation harness.

pub mod accuracy;
pub mod cost;
pub mod dataset;
pub mod difficulty;
pub mod harness;
pub mod report;

pub use accuracy::{compare_results, execution_accuracy, AccuracyError, ExOutcome};
pub use cost::{cost_report, CostError, CostReport, PriceTable};
pub use dataset::{load_dataset, parse_dataset, resolve_db_path, DatasetError, DatasetFormat, EvalItem};
pub use difficulty::{
    compute_cvcr, compute_cvr, difficulty_stats, join_distribution, schema_stats, CoverageMode,
    DifficultyStats, JoinDistribution, Rate, SchemaStats,
};
pub use harness::{open_toolset, run_eval, EvalRun, HarnessConfig, Predictor};
pub use report::{Aggregates, EvalReport, ItemResult};
