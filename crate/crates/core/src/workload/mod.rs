//! Client workload, run metrics, the latency model, and post-run checks.

mod client;
mod compare;
mod metrics;
mod predict;
mod verify;

pub use client::{Client, Outstanding, TargetSelection, WorkloadConfig};
pub use compare::{compare_runs, CompareError, ImprovementReport, RunSummary};
pub use metrics::{AckRecord, LatencyStats, MetricsReport, NodeStats, RunMetrics};
pub use predict::{
    predict_latency_nontransactional, predict_latency_transactional, LatencyPrediction,
};
pub use verify::{verify_run, verify_trace_text, Check, CheckResult, VerdictReport};
