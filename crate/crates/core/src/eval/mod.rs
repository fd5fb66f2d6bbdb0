//! Temporal evaluation: hourly train/evaluate protocol, ranking metrics,
//! audit of temporal integrity and aggregation of hourly results.

mod harness;
mod metrics;
mod report;

pub use harness::{
    candidate_hash, evaluate_hour, run_temporal_evaluation, Audit, BuiltinScorer, EvalConfig, EvalRun, EvaluationRecord,
    HourEvaluation, HourlyMetrics, Method, Scorer, Snapshot,
};
pub use metrics::{hr_at_k, mrr_at_k, rank_of_positive, ranking, DEFAULT_K};
pub use report::{
    aggregate_report, mean, median, metrics_tsv, parse_metrics, read_metrics, relative_improvement, write_metrics,
    write_records, MethodSummary, Report, METRICS_HEADER,
};

#[cfg(test)]
mod tests;
