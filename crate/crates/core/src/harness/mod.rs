//! Experiment orchestration: multi-seed runs, ablation matrices and score
//! normalization.

mod ablation;
mod experiment;
mod scores;

pub use ablation::{
    expand, run_ablation, score_runs, AblationReport, PlannedRun, Role, ScoreMetric, ScoredRun, Variant,
    ALPHAS, BASELINES,
};
pub use experiment::{
    read_jsonl, record_metric, replay_check, run_experiment, ExperimentResult, ReplayReport, RunOptions,
    SeedSummary, Summary, CSV_METRICS,
};
pub use scores::{aggregate, bns, hns, AggregateReport, RowScore, ScoreRow, ScoreTable};
